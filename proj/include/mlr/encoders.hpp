#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

#include "mlr/errors.hpp"
#include "mlr/masking.hpp"

namespace mlr {

enum class EncoderVariant { Continuous, Discrete };

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::Continuous;
  int64_t in_channels = 9;  // stacked frames x channels
  int64_t in_h = 84;
  int64_t in_w = 84;
  int64_t latent_dim = 50;  // 50 on the continuous path, 256 token width on the discrete path
  int64_t conv_channels = 32;  // continuous-path conv width
};

// Pixel encoder producing the d-dimensional latent state.
//
// Continuous variant: four 3x3 conv layers (stride 2 then 1,1,1) with ReLU,
// a fully connected layer and layer normalization. Discrete variant: the
// classic 8/4/3 conv stack (channels 32/64/64, strides 4/2/1) flattened into
// a linear token projection.
class PixelEncoderImpl : public torch::nn::Module {
 public:
  explicit PixelEncoderImpl(const EncoderConfig& cfg) : cfg_(cfg) {
    namespace nn = torch::nn;
    convs_ = register_module("convs", nn::Sequential());
    if (cfg.variant == EncoderVariant::Continuous) {
      int64_t c = cfg.conv_channels;
      convs_->push_back(nn::Conv2d(nn::Conv2dOptions(cfg.in_channels, c, 3).stride(2)));
      convs_->push_back(nn::Functional(torch::relu));
      for (int i = 0; i < 3; ++i) {
        convs_->push_back(nn::Conv2d(nn::Conv2dOptions(c, c, 3).stride(1)));
        convs_->push_back(nn::Functional(torch::relu));
      }
    } else {
      convs_->push_back(nn::Conv2d(nn::Conv2dOptions(cfg.in_channels, 32, 8).stride(4)));
      convs_->push_back(nn::Functional(torch::relu));
      convs_->push_back(nn::Conv2d(nn::Conv2dOptions(32, 64, 4).stride(2)));
      convs_->push_back(nn::Functional(torch::relu));
      convs_->push_back(nn::Conv2d(nn::Conv2dOptions(64, 64, 3).stride(1)));
      convs_->push_back(nn::Functional(torch::relu));
    }

    feature_shape_ = infer_feature_shape();
    int64_t flat = feature_shape_[0] * feature_shape_[1] * feature_shape_[2];
    if (feature_shape_[1] <= 0 || feature_shape_[2] <= 0)
      throw InvalidSpec("encoder input too small for the conv stack");
    fc_ = register_module("fc", torch::nn::Linear(flat, cfg.latent_dim));
    if (cfg.variant == EncoderVariant::Continuous)
      ln_ = register_module("ln", torch::nn::LayerNorm(
                                      torch::nn::LayerNormOptions({cfg.latent_dim})));
  }

  const EncoderConfig& config() const { return cfg_; }
  // {channels, height, width} of the post-convolution feature map.
  std::array<int64_t, 3> feature_shape() const { return feature_shape_; }
  int64_t latent_dim() const { return cfg_.latent_dim; }

  torch::Tensor conv_features(const torch::Tensor& x) {
    check_input(x);
    return convs_->forward(x);
  }

  torch::Tensor head(const torch::Tensor& features) {
    auto z = fc_(features.flatten(1));
    if (ln_) z = ln_(z);
    return z;
  }

  torch::Tensor forward(const torch::Tensor& x) { return head(conv_features(x)); }

  // Feature-space masking path: zero out masked positions of the conv
  // feature map before the projection head. `x`: [K, D, H, W] for one
  // sequence; the plan is drawn on the feature extents.
  torch::Tensor forward_masked_features(const torch::Tensor& x, const MaskPlan& plan,
                                        const CubeMaskSpec& spec) {
    auto f = conv_features(x);
    return head(apply_feature_mask(f, plan, spec));
  }

 private:
  void check_input(const torch::Tensor& x) const {
    if (x.dim() != 4 || x.size(1) != cfg_.in_channels || x.size(2) != cfg_.in_h ||
        x.size(3) != cfg_.in_w)
      throw ShapeMismatch("encoder input does not match configured shape");
  }

  std::array<int64_t, 3> infer_feature_shape() {
    torch::NoGradGuard no_grad;
    auto probe = torch::zeros({1, cfg_.in_channels, cfg_.in_h, cfg_.in_w});
    auto f = convs_->forward(probe);
    return {f.size(1), f.size(2), f.size(3)};
  }

  EncoderConfig cfg_;
  std::array<int64_t, 3> feature_shape_{};
  torch::nn::Sequential convs_{nullptr};
  torch::nn::Linear fc_{nullptr};
  torch::nn::LayerNorm ln_{nullptr};
};
TORCH_MODULE(PixelEncoder);

}  // namespace mlr
