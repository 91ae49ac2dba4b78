#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>

#include "mlr/errors.hpp"
#include "mlr/positional.hpp"

namespace mlr {

struct DecoderConfig {
  int64_t layers = 2;
  int64_t width = 50;  // token dim, equals the state representation dim
  int64_t heads = 1;
  double mlp_ratio = 2.0;
  bool use_action_tokens = true;
  bool use_pos_embeddings = true;
  int64_t max_pos = 16;
  // Action input: continuous dimension, or number of discrete actions.
  int64_t action_dim = 1;
  bool discrete_actions = false;
};

// Pre-norm transformer block:
//   z = MSA(LN(x)) + x
//   x' = MLP(LN(z)) + z
// QKV projections carry no bias; the output projection and MLP do.
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(int64_t width, int64_t heads, double mlp_ratio)
      : heads_(heads), head_dim_(width / heads) {
    if (width % heads != 0) throw InvalidSpec("token width must divide attention heads");
    auto hidden = static_cast<int64_t>(width * mlp_ratio);
    ln1_ = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
    qkv_ = register_module(
        "qkv", torch::nn::Linear(torch::nn::LinearOptions(width, 3 * width).bias(false)));
    out_proj_ = register_module("out_proj", torch::nn::Linear(width, width));
    ln2_ = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({width})));
    fc1_ = register_module("fc1", torch::nn::Linear(width, hidden));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden, width));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto z = attention(ln1_(x)) + x;
    return mlp(ln2_(z)) + z;
  }

 private:
  torch::Tensor attention(const torch::Tensor& x) {
    int64_t b = x.size(0), t = x.size(1), c = x.size(2);
    auto qkv = qkv_(x).reshape({b, t, 3, heads_, head_dim_}).permute({2, 0, 3, 1, 4});
    auto q = qkv[0], k = qkv[1], v = qkv[2];  // [b, heads, t, hd]
    auto attn = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_));
    attn = torch::softmax(attn, -1);
    auto y = torch::matmul(attn, v);  // [b, heads, t, hd]
    y = y.transpose(1, 2).reshape({b, t, c});
    return out_proj_(y);
  }

  torch::Tensor mlp(const torch::Tensor& x) { return fc2_(torch::relu(fc1_(x))); }

  int64_t heads_, head_dim_;
  torch::nn::LayerNorm ln1_{nullptr}, ln2_{nullptr};
  torch::nn::Linear qkv_{nullptr}, out_proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(AttentionBlock);

// Maps an action to a token of the decoder width.
class ActionEmbedderImpl : public torch::nn::Module {
 public:
  ActionEmbedderImpl(const DecoderConfig& cfg) : discrete_(cfg.discrete_actions) {
    if (discrete_)
      table_ = register_module("table", torch::nn::Embedding(cfg.action_dim, cfg.width));
    else
      linear_ = register_module("linear", torch::nn::Linear(cfg.action_dim, cfg.width));
  }

  // actions: [B, K, A] float (continuous) or [B, K] long (discrete).
  torch::Tensor forward(const torch::Tensor& actions) {
    return discrete_ ? table_(actions) : linear_(actions);
  }

 private:
  bool discrete_;
  torch::nn::Embedding table_{nullptr};
  torch::nn::Linear linear_{nullptr};
};
TORCH_MODULE(ActionEmbedder);

// Transformer over interleaved state/action tokens. The state and action
// token of timestep i receive the same positional row; outputs are returned
// at state-token positions only.
class LatentDecoderImpl : public torch::nn::Module {
 public:
  explicit LatentDecoderImpl(const DecoderConfig& cfg, torch::Dtype dtype = torch::kFloat32)
      : cfg_(cfg), pos_(cfg.max_pos, cfg.width, dtype) {
    blocks_ = register_module("blocks", torch::nn::ModuleList());
    for (int64_t i = 0; i < cfg.layers; ++i)
      blocks_->push_back(AttentionBlock(cfg.width, cfg.heads, cfg.mlp_ratio));
    embed_ = register_module("embed", ActionEmbedder(cfg));
    if (dtype != torch::kFloat32) this->to(dtype);
  }

  const DecoderConfig& config() const { return cfg_; }
  const PositionalEmbedding& positional() const { return pos_; }

  // states: [B, K, width]; actions: [B, K, A] or [B, K] (ignored when action
  // tokens are disabled). Returns [B, T, width] with T = 2K or K.
  torch::Tensor build_tokens(const torch::Tensor& states, const torch::Tensor& actions) {
    int64_t b = states.size(0), k = states.size(1);
    if (k > cfg_.max_pos) throw LengthMismatch("sequence longer than positional table");
    torch::Tensor tokens;
    if (cfg_.use_action_tokens) {
      if (actions.size(0) != b || actions.size(1) != k)
        throw LengthMismatch("state/action sequence lengths differ");
      auto act_tok = embed_(actions);                       // [B, K, C]
      tokens = torch::stack({states, act_tok}, 2)           // [B, K, 2, C]
                   .reshape({b, 2 * k, cfg_.width});        // [s_0, a_0, s_1, a_1, ...]
    } else {
      tokens = states;
    }
    if (cfg_.use_pos_embeddings) {
      auto rows = pos_.rows(k).to(states.dtype());  // [K, C]
      if (cfg_.use_action_tokens) rows = rows.repeat_interleave(2, 0);
      tokens = tokens + rows.unsqueeze(0);
    }
    return tokens;
  }

  // Runs the attention stack and selects state-token outputs, length K.
  torch::Tensor decode(const torch::Tensor& tokens) {
    auto x = tokens;
    for (auto& block : *blocks_) x = block->as<AttentionBlockImpl>()->forward(x);
    if (!cfg_.use_action_tokens) return x;
    int64_t k = tokens.size(1) / 2;
    auto idx = torch::arange(0, 2 * k, 2, torch::kLong);
    return x.index_select(1, idx);
  }

  torch::Tensor forward(const torch::Tensor& states, const torch::Tensor& actions) {
    return decode(build_tokens(states, actions));
  }

  // Parameters of the attention stack alone (the measure reported for
  // decoder-depth comparisons).
  int64_t attention_parameter_count() const {
    int64_t n = 0;
    for (const auto& p : blocks_->parameters()) n += p.numel();
    return n;
  }

 private:
  DecoderConfig cfg_;
  PositionalEmbedding pos_;
  torch::nn::ModuleList blocks_{nullptr};
  ActionEmbedder embed_{nullptr};
};
TORCH_MODULE(LatentDecoder);

// Central-difference gradient check of a scalar readout through decode.
// Returns the max relative error across all decoder parameters. Intended to
// be run on double-precision modules.
inline double gradcheck_decoder(LatentDecoder& decoder, const torch::Tensor& states,
                                const torch::Tensor& actions, double fd_step = 1e-5) {
  auto readout_weights =
      torch::arange(1, states.numel() + 1, torch::kFloat64).reshape(states.sizes()) /
      static_cast<double>(states.numel());

  auto loss_fn = [&]() {
    auto out = decoder->forward(states, actions);
    return (out * readout_weights).sum();
  };

  for (auto& p : decoder->parameters()) {
    if (p.grad().defined()) p.grad().zero_();
  }
  auto loss = loss_fn();
  loss.backward();

  double max_rel = 0.0;
  torch::NoGradGuard no_grad;
  for (auto& p : decoder->parameters()) {
    auto flat = p.view(-1);
    auto grad = p.grad().defined() ? p.grad().view(-1) : torch::zeros_like(flat);
    for (int64_t i = 0; i < flat.numel(); ++i) {
      double orig = flat[i].item<double>();
      flat[i] = orig + fd_step;
      double up = loss_fn().item<double>();
      flat[i] = orig - fd_step;
      double down = loss_fn().item<double>();
      flat[i] = orig;
      double fd = (up - down) / (2 * fd_step);
      double an = grad[i].item<double>();
      double denom = std::max({std::abs(an), std::abs(fd), 1e-4});
      max_rel = std::max(max_rel, std::abs(an - fd) / denom);
    }
  }
  return max_rel;
}

}  // namespace mlr
