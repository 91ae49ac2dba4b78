#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace mlr {

struct HeadConfig {
  bool use_projection = true;
  bool use_prediction = true;
  int64_t input_dim = 50;  // latent dim d
  int64_t hidden = 100;    // projector hidden width
  int64_t proj_dim = 50;   // projected space width

  int64_t output_dim() const { return use_projection ? proj_dim : input_dim; }
};

// Projection g: two-layer MLP; identity when disabled. The momentum copy
// (EMA-tracked) has the same architecture.
class ProjectionHeadImpl : public torch::nn::Module {
 public:
  explicit ProjectionHeadImpl(const HeadConfig& cfg) : cfg_(cfg) {
    if (cfg.use_projection) {
      fc1_ = register_module("fc1", torch::nn::Linear(cfg.input_dim, cfg.hidden));
      fc2_ = register_module("fc2", torch::nn::Linear(cfg.hidden, cfg.proj_dim));
    }
  }

  torch::Tensor forward(const torch::Tensor& s) {
    if (!fc1_) return s;
    return fc2_(torch::relu(fc1_(s)));
  }

 private:
  HeadConfig cfg_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(ProjectionHead);

// Prediction q: one linear layer, online branch only; identity when
// disabled.
class PredictionHeadImpl : public torch::nn::Module {
 public:
  explicit PredictionHeadImpl(const HeadConfig& cfg) {
    if (cfg.use_prediction) {
      int64_t dim = cfg.output_dim();
      fc_ = register_module("fc", torch::nn::Linear(dim, dim));
    }
  }

  torch::Tensor forward(const torch::Tensor& z) { return fc_ ? fc_(z) : z; }

 private:
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(PredictionHead);

}  // namespace mlr
