#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "mlr/augment.hpp"
#include "mlr/encoders.hpp"
#include "mlr/errors.hpp"
#include "mlr/heads.hpp"
#include "mlr/latent_decoder.hpp"
#include "mlr/masking.hpp"
#include "mlr/momentum.hpp"
#include "mlr/replay_buffer.hpp"
#include "mlr/rng.hpp"
#include "mlr/types.hpp"

namespace mlr {

enum class TargetSpace { Latent, Pixel };
enum class LossMetric { Cosine, Mse };
enum class MaskSpace { Pixel, Feature };

struct MLRConfig {
  double lambda = 1.0;
  int64_t K = 16;
  CubeMaskSpec mask;
  TargetSpace target_space = TargetSpace::Latent;
  LossMetric loss_metric = LossMetric::Cosine;
  bool use_action_tokens = true;
  bool momentum_decoder = false;
  MaskSpace mask_space = MaskSpace::Pixel;
  HeadConfig heads;
  int64_t warmup_steps = 6000;
  int64_t aux_batch = 128;
  AugmentSpec aug;
  double ema_m = 0.95;
  int64_t decoder_layers = 2;
  int64_t decoder_heads = 1;
  double decoder_mlp_ratio = 2.0;
  bool decoder_pos_embeddings = true;
};

struct MLRLossReport {
  double loss = 0.0;
  std::vector<double> per_step_similarities;  // cosine per timestep (negative
                                              // pixel MSE for pixel targets)
  double grad_norm = 0.0;
};

// Inverse-sqrt warmup: lr0 * min(step^-0.5, step * warmup^-1.5).
inline double warmup_lr(double lr0, int64_t step, int64_t warmup_steps) {
  if (step < 1) throw InvalidArgument("warmup step must be >= 1");
  if (warmup_steps < 1) throw InvalidArgument("warmup_steps must be >= 1");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup_steps);
  return lr0 * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

// L_total = L_rl + lambda * L_mlr.
inline double total_loss(double rl_loss, double mlr_loss, double lambda) {
  if (!std::isfinite(rl_loss) || !std::isfinite(mlr_loss) || !std::isfinite(lambda))
    throw NumericalError("non-finite loss term");
  return rl_loss + lambda * mlr_loss;
}

// 1 - mean cosine similarity over paired rows; bounded in [0, 2].
inline torch::Tensor cosine_reconstruction_loss(const torch::Tensor& y_hat,
                                                const torch::Tensor& y_bar) {
  return 1.0 - torch::cosine_similarity(y_hat, y_bar, /*dim=*/1).mean();
}

// Frozen stochastic choices of one auxiliary update, so the loss is a pure
// function of parameters given a draw (used by the gradient checks).
struct MlrDraws {
  std::vector<MaskPlan> plans;        // per batch item
  std::vector<AugmentDraw> online;    // per batch item
  std::vector<AugmentDraw> target;    // independent of the online view
};

// Deconvolution head for the pixel-space reconstruction variant. Mirrors
// the encoder coarsely: a linear lift followed by three transposed convs
// (two stride-2 upsamples plus a refinement layer), sliced to the exact
// output extent.
class PixelReconHeadImpl : public torch::nn::Module {
 public:
  PixelReconHeadImpl(int64_t latent_dim, int64_t out_channels, int64_t out_h, int64_t out_w)
      : out_c_(out_channels), out_h_(out_h), out_w_(out_w) {
    h0_ = (out_h + 3) / 4;
    w0_ = (out_w + 3) / 4;
    namespace nn = torch::nn;
    fc_ = register_module("fc", nn::Linear(latent_dim, 32 * h0_ * w0_));
    up1_ = register_module(
        "up1", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(32, 32, 4).stride(2).padding(1)));
    up2_ = register_module(
        "up2", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(32, 16, 4).stride(2).padding(1)));
    refine_ = register_module(
        "refine",
        nn::ConvTranspose2d(nn::ConvTranspose2dOptions(16, out_channels, 3).stride(1).padding(1)));
  }

  // latents: [N, d] -> pixels [N, D, H, W] in (0,1).
  torch::Tensor forward(const torch::Tensor& latents) {
    auto x = torch::relu(fc_(latents)).view({latents.size(0), 32, h0_, w0_});
    x = torch::relu(up1_(x));
    x = torch::relu(up2_(x));
    x = torch::sigmoid(refine_(x));
    return x.slice(2, 0, out_h_).slice(3, 0, out_w_);
  }

 private:
  int64_t out_c_, out_h_, out_w_, h0_ = 0, w0_ = 0;
  torch::nn::Linear fc_{nullptr};
  torch::nn::ConvTranspose2d up1_{nullptr}, up2_{nullptr}, refine_{nullptr};
};
TORCH_MODULE(PixelReconHead);

// The auxiliary objective: mask -> augment -> online encode -> latent
// decode -> project/predict, compared against momentum targets from the
// unmasked sequence. Owns every auxiliary network; the online encoder is
// shared with the agent.
class MlrObjective : public torch::nn::Module {
 public:
  // The momentum encoder may be shared with the agent's target path (the
  // lineage both benchmarks follow); pass nullptr to create a private copy.
  MlrObjective(const MLRConfig& cfg, PixelEncoder online_encoder,
               PixelEncoder momentum_encoder, int64_t action_dim, bool discrete_actions,
               torch::Dtype dtype = torch::kFloat32)
      : cfg_(cfg), encoder_(online_encoder), momentum_encoder_(momentum_encoder) {
    register_module("encoder", encoder_.ptr());

    EncoderConfig enc_cfg = encoder_->config();
    if (momentum_encoder_.is_empty()) momentum_encoder_ = PixelEncoder(enc_cfg);
    register_module("momentum_encoder", momentum_encoder_.ptr());

    DecoderConfig dec_cfg;
    dec_cfg.layers = cfg.decoder_layers;
    dec_cfg.width = enc_cfg.latent_dim;
    dec_cfg.heads = cfg.decoder_heads;
    dec_cfg.mlp_ratio = cfg.decoder_mlp_ratio;
    dec_cfg.use_action_tokens = cfg.use_action_tokens;
    dec_cfg.use_pos_embeddings = cfg.decoder_pos_embeddings;
    dec_cfg.max_pos = cfg.K;
    dec_cfg.action_dim = action_dim;
    dec_cfg.discrete_actions = discrete_actions;
    decoder_ = LatentDecoder(dec_cfg, dtype);
    register_module("decoder", decoder_.ptr());

    HeadConfig head_cfg = cfg.heads;
    head_cfg.input_dim = enc_cfg.latent_dim;
    proj_ = ProjectionHead(head_cfg);
    register_module("proj", proj_.ptr());
    momentum_proj_ = ProjectionHead(head_cfg);
    register_module("momentum_proj", momentum_proj_.ptr());
    pred_ = PredictionHead(head_cfg);
    register_module("pred", pred_.ptr());

    if (cfg.momentum_decoder) {
      momentum_decoder_ = LatentDecoder(dec_cfg, dtype);
      register_module("momentum_decoder", momentum_decoder_.ptr());
    }
    if (cfg.target_space == TargetSpace::Pixel) {
      pixel_head_ = PixelReconHead(enc_cfg.latent_dim, enc_cfg.in_channels, raw_h_hint(enc_cfg),
                                   raw_w_hint(enc_cfg));
      register_module("pixel_head", pixel_head_.ptr());
    }

    if (dtype != torch::kFloat32) this->to(dtype);
    sync_momentum();
  }

  const MLRConfig& config() const { return cfg_; }
  PixelEncoder encoder() { return encoder_; }
  PixelEncoder momentum_encoder() { return momentum_encoder_; }
  LatentDecoder decoder() { return decoder_; }
  ProjectionHead projection() { return proj_; }
  ProjectionHead momentum_projection() { return momentum_proj_; }
  PredictionHead prediction() { return pred_; }

  // Momentum nets start as exact copies and never require grad.
  void sync_momentum() {
    hard_sync(*encoder_, *momentum_encoder_);
    hard_sync(*proj_, *momentum_proj_);
    freeze(*momentum_encoder_);
    freeze(*momentum_proj_);
    if (momentum_decoder_) {
      hard_sync(*decoder_, *momentum_decoder_);
      freeze(*momentum_decoder_);
    }
  }

  // The encoder pair is advanced by the agent's target-update cadence when
  // training jointly; stand-alone pretraining passes include_encoder=true.
  void ema_step(bool include_encoder = false) {
    if (include_encoder) ema_update(*encoder_, *momentum_encoder_, cfg_.ema_m);
    ema_update(*proj_, *momentum_proj_, cfg_.ema_m);
    if (momentum_decoder_) ema_update(*decoder_, *momentum_decoder_, cfg_.ema_m);
  }

  // Parameters updated by the auxiliary loss, excluding the shared encoder
  // (which lives in the RL optimizer group).
  std::vector<torch::Tensor> aux_parameters() {
    std::vector<torch::Tensor> out;
    append(out, decoder_->parameters());
    append(out, proj_->parameters());
    append(out, pred_->parameters());
    if (pixel_head_) append(out, pixel_head_->parameters());
    return out;
  }

  // Everything L_mlr trains when running stand-alone (pretraining).
  std::vector<torch::Tensor> online_parameters() {
    std::vector<torch::Tensor> out;
    append(out, encoder_->parameters());
    append(out, aux_parameters());
    return out;
  }

  MlrDraws sample_draws(const torch::Tensor& obs, Rng& mask_rng, Rng& aug_rng) const {
    int64_t b = obs.size(0), k = obs.size(1), h = obs.size(3), w = obs.size(4);
    MlrDraws draws;
    draws.plans.reserve(static_cast<size_t>(b));
    draws.online.reserve(static_cast<size_t>(b));
    draws.target.reserve(static_cast<size_t>(b));
    auto fs = encoder_->feature_shape();
    for (int64_t i = 0; i < b; ++i) {
      if (cfg_.mask_space == MaskSpace::Feature) {
        CubeMaskSpec fspec = cfg_.mask;
        fspec.strategy = MaskStrategy::Feature;
        fspec.h = std::min(fspec.h, fs[1]);
        fspec.w = std::min(fspec.w, fs[2]);
        fspec.k = std::min(fspec.k, k);
        draws.plans.push_back(sample_mask(fspec, k, fs[1], fs[2], mask_rng));
      } else {
        draws.plans.push_back(sample_mask(cfg_.mask, k, h, w, mask_rng));
      }
      auto seq = obs[i];
      draws.online.push_back(sample_augment(seq, cfg_.aug, aug_rng));
      draws.target.push_back(sample_augment(seq, cfg_.aug, aug_rng));
    }
    return draws;
  }

  // Pure loss given frozen draws. obs: [B, K, D, H, W] raw stored pixels in
  // [0,1]; actions: [B, K, A] float or [B, K] long.
  std::pair<torch::Tensor, MLRLossReport> loss_with_draws(const torch::Tensor& obs,
                                                          const torch::Tensor& actions,
                                                          const MlrDraws& draws) {
    int64_t b = obs.size(0), k = obs.size(1);
    if (k != cfg_.K) throw LengthMismatch("trajectory length does not match configured K");

    std::vector<torch::Tensor> online_views, target_views;
    online_views.reserve(static_cast<size_t>(b));
    target_views.reserve(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
      auto seq = obs[i];
      auto masked = (cfg_.mask_space == MaskSpace::Pixel)
                        ? apply_mask(seq, draws.plans[static_cast<size_t>(i)], cfg_.mask)
                        : seq;
      online_views.push_back(augment_at(masked, cfg_.aug, draws.online[static_cast<size_t>(i)]));
      target_views.push_back(augment_at(seq, cfg_.aug, draws.target[static_cast<size_t>(i)]));
    }
    auto online_x = torch::stack(online_views, 0).flatten(0, 1);  // [B*K, D, h, w]
    auto target_x = torch::stack(target_views, 0).flatten(0, 1);

    torch::Tensor s_online;
    if (cfg_.mask_space == MaskSpace::Feature) {
      auto f = encoder_->conv_features(online_x);
      auto fs = encoder_->feature_shape();
      std::vector<torch::Tensor> masks;
      masks.reserve(static_cast<size_t>(b));
      for (int64_t i = 0; i < b; ++i)
        masks.push_back(draws.plans[static_cast<size_t>(i)].pixel_mask());
      auto mask = torch::stack(masks, 0).view({b * k, 1, fs[1], fs[2]});
      f = torch::where(mask, torch::full({}, cfg_.mask.fill_value, f.options()), f);
      s_online = encoder_->head(f);
    } else {
      s_online = encoder_->forward(online_x);
    }
    auto d = s_online.size(1);
    auto s_hat = decoder_->forward(s_online.view({b, k, d}), actions);  // [B, K, d]

    torch::Tensor y_bar;
    {
      torch::NoGradGuard no_grad;
      auto s_bar = momentum_encoder_->forward(target_x).view({b, k, d});
      if (momentum_decoder_) s_bar = momentum_decoder_->forward(s_bar, actions);
      y_bar = momentum_proj_->forward(s_bar.reshape({b * k, d})).detach();
    }

    torch::Tensor loss;
    MLRLossReport report;
    if (cfg_.target_space == TargetSpace::Latent) {
      auto y_hat = pred_->forward(proj_->forward(s_hat.reshape({b * k, d})));
      auto cos = torch::cosine_similarity(y_hat, y_bar, /*dim=*/1);  // [B*K]
      if (cfg_.loss_metric == LossMetric::Cosine) {
        loss = cosine_reconstruction_loss(y_hat, y_bar);
      } else {
        auto yn = torch::nn::functional::normalize(
            y_hat, torch::nn::functional::NormalizeFuncOptions().dim(1));
        auto tn = torch::nn::functional::normalize(
            y_bar, torch::nn::functional::NormalizeFuncOptions().dim(1));
        loss = (yn - tn).pow(2).sum(1).mean();
      }
      auto per_step = cos.view({b, k}).mean(0);
      for (int64_t i = 0; i < k; ++i)
        report.per_step_similarities.push_back(per_step[i].item<double>());
    } else {
      auto recon = pixel_head_->forward(s_hat.reshape({b * k, d}));
      // Targets are the unaugmented originals, center-cropped when the
      // stored frames are larger than the reconstruction extent.
      auto target_pixels =
          center_crop(obs.flatten(0, 1), recon.size(2), recon.size(3)).to(recon.dtype());
      auto per_item = (recon - target_pixels).pow(2).flatten(1).mean(1);  // [B*K]
      loss = per_item.mean();
      auto per_step = per_item.view({b, k}).mean(0);
      for (int64_t i = 0; i < k; ++i)
        report.per_step_similarities.push_back(-per_step[i].item<double>());
    }

    report.loss = loss.item<double>();
    if (!std::isfinite(report.loss)) throw NumericalError("auxiliary loss is not finite");
    return {loss, report};
  }

  std::pair<torch::Tensor, MLRLossReport> compute_loss(const torch::Tensor& obs,
                                                       const torch::Tensor& actions,
                                                       Rng& mask_rng, Rng& aug_rng) {
    return loss_with_draws(obs, actions, sample_draws(obs, mask_rng, aug_rng));
  }

  // Mean cosine between online-encoded masked and original observations, a
  // diagnostic of how predictive the representation is under occlusion.
  double regression_accuracy(const ReplayBuffer& buffer, int64_t n, Rng& mask_rng,
                             Rng& sample_rng);

  // L2 norm over the gradients of every online auxiliary parameter.
  double grad_norm() {
    double sq = 0.0;
    for (const auto& p : online_parameters())
      if (p.grad().defined()) sq += p.grad().pow(2).sum().item<double>();
    return std::sqrt(sq);
  }

 private:
  static void append(std::vector<torch::Tensor>& dst, std::vector<torch::Tensor> src) {
    dst.insert(dst.end(), src.begin(), src.end());
  }
  // Pixel targets are reconstructed at the raw stored size, which equals the
  // encoder input unless a crop margin separates them; the stored sequence
  // passed to loss_with_draws defines the actual extent.
  static int64_t raw_h_hint(const EncoderConfig& c) { return c.in_h; }
  static int64_t raw_w_hint(const EncoderConfig& c) { return c.in_w; }

  MLRConfig cfg_;
  PixelEncoder encoder_{nullptr};
  PixelEncoder momentum_encoder_{nullptr};
  LatentDecoder decoder_{nullptr};
  LatentDecoder momentum_decoder_{nullptr};
  ProjectionHead proj_{nullptr};
  ProjectionHead momentum_proj_{nullptr};
  PredictionHead pred_{nullptr};
  PixelReconHead pixel_head_{nullptr};
};

// Mean cosine between encodings of masked and original observation
// sequences, using the same encoder on both sides. Works for baseline
// encoders with no auxiliary networks attached.
inline double encoder_regression_accuracy(PixelEncoder encoder, const MLRConfig& cfg,
                                          const ReplayBuffer& buffer, int64_t n, Rng& mask_rng,
                                          Rng& sample_rng) {
  torch::NoGradGuard no_grad;
  auto enc_cfg = encoder->config();
  double total = 0.0;
  int64_t count = 0;
  while (count < n) {
    auto traj = buffer.sample_trajectory(cfg.K, sample_rng);
    auto seq = stack_observations(traj.observations);  // [K, D, H, W]
    CubeMaskSpec spec = cfg.mask;
    spec.k = std::min(spec.k, cfg.K);
    auto plan = sample_mask(spec, seq.size(0), seq.size(2), seq.size(3), mask_rng);
    auto masked = apply_mask(seq, plan, spec);
    auto crop = [&](const torch::Tensor& x) {
      return center_crop(x, enc_cfg.in_h, enc_cfg.in_w);
    };
    auto s_masked = encoder->forward(crop(masked));
    auto s_orig = encoder->forward(crop(seq));
    auto cos = torch::cosine_similarity(s_masked, s_orig, 1);
    for (int64_t i = 0; i < cos.size(0) && count < n; ++i, ++count)
      total += cos[i].item<double>();
  }
  return total / static_cast<double>(n);
}

inline double MlrObjective::regression_accuracy(const ReplayBuffer& buffer, int64_t n,
                                                Rng& mask_rng, Rng& sample_rng) {
  return encoder_regression_accuracy(encoder_, cfg_, buffer, n, mask_rng, sample_rng);
}

// Builds [B, K, D, H, W] float pixels and the action tensor from sampled
// trajectories.
inline torch::Tensor trajectories_to_obs(const std::vector<Trajectory>& trajs) {
  std::vector<torch::Tensor> seqs;
  seqs.reserve(trajs.size());
  for (const auto& t : trajs) seqs.push_back(stack_observations(t.observations));
  return torch::stack(seqs, 0);
}

inline torch::Tensor trajectories_to_actions(const std::vector<Trajectory>& trajs) {
  bool discrete = trajs.front().actions.front().is_discrete();
  int64_t b = static_cast<int64_t>(trajs.size());
  int64_t k = trajs.front().length();
  if (discrete) {
    auto out = torch::empty({b, k}, torch::kLong);
    for (int64_t i = 0; i < b; ++i)
      for (int64_t j = 0; j < k; ++j)
        out[i][j] = trajs[static_cast<size_t>(i)].actions[static_cast<size_t>(j)].discrete();
    return out;
  }
  int64_t a = static_cast<int64_t>(trajs.front().actions.front().continuous().size());
  auto out = torch::empty({b, k, a}, torch::kFloat32);
  for (int64_t i = 0; i < b; ++i)
    for (int64_t j = 0; j < k; ++j) {
      const auto& v = trajs[static_cast<size_t>(i)].actions[static_cast<size_t>(j)].continuous();
      for (int64_t q = 0; q < a; ++q) out[i][j][q] = v[static_cast<size_t>(q)];
    }
  return out;
}

// Stand-alone auxiliary training (no policy learning): `steps` optimizer
// updates of L_mlr over trajectories from a pre-filled buffer.
inline void pretrain_only(MlrObjective& objective, ReplayBuffer& buffer, int64_t steps,
                          double lr0, Rng& mask_rng, Rng& aug_rng, Rng& sample_rng,
                          std::function<void(int64_t, const MLRLossReport&)> on_step = {}) {
  if (steps <= 0) return;
  torch::optim::Adam opt(objective.online_parameters(), torch::optim::AdamOptions(lr0));
  for (int64_t step = 1; step <= steps; ++step) {
    auto trajs = buffer.sample_trajectories(objective.config().aux_batch, objective.config().K,
                                            sample_rng);
    auto obs = trajectories_to_obs(trajs);
    auto actions = trajectories_to_actions(trajs);
    auto [loss, report] = objective.compute_loss(obs, actions, mask_rng, aug_rng);
    opt.zero_grad();
    loss.backward();
    if (objective.config().warmup_steps > 0) {
      double lr = warmup_lr(lr0, step, objective.config().warmup_steps);
      for (auto& group : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }
    opt.step();
    objective.ema_step(/*include_encoder=*/true);
    report.grad_norm = objective.grad_norm();
    if (on_step) on_step(step, report);
  }
}

}  // namespace mlr
