#pragma once

#include <torch/torch.h>

#include <cstring>

#include "mlr/errors.hpp"

namespace mlr {

// theta_bar <- m * theta_bar + (1 - m) * theta, elementwise. Momentum
// parameters never receive optimizer gradients; they change only here.
inline void ema_update(const torch::nn::Module& online, torch::nn::Module& momentum, double m) {
  torch::NoGradGuard no_grad;
  auto src = online.parameters();
  auto dst = momentum.parameters();
  if (src.size() != dst.size()) throw ShapeMismatch("EMA parameter lists differ in length");
  for (size_t i = 0; i < src.size(); ++i) {
    if (!src[i].sizes().equals(dst[i].sizes()))
      throw ShapeMismatch("EMA parameter shapes differ");
    dst[i].mul_(m).add_(src[i], 1.0 - m);
  }
}

// Exact copy of the online parameters (EMA with m = 0, and the initial
// state of every momentum network).
inline void hard_sync(const torch::nn::Module& online, torch::nn::Module& momentum) {
  torch::NoGradGuard no_grad;
  auto src = online.parameters();
  auto dst = momentum.parameters();
  if (src.size() != dst.size()) throw ShapeMismatch("sync parameter lists differ in length");
  for (size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
}

inline void freeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
}

inline std::vector<torch::Tensor> snapshot_parameters(const torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  for (const auto& p : module.parameters()) out.push_back(p.clone());
  return out;
}

// Byte-level comparison, used by the immutability audits.
inline bool bit_identical(const torch::Tensor& a, const torch::Tensor& b) {
  if (!a.sizes().equals(b.sizes()) || a.dtype() != b.dtype()) return false;
  auto ca = a.contiguous(), cb = b.contiguous();
  return std::memcmp(ca.data_ptr(), cb.data_ptr(), ca.numel() * ca.element_size()) == 0;
}

inline bool bit_identical(const std::vector<torch::Tensor>& snapshot,
                          const torch::nn::Module& module) {
  auto params = module.parameters();
  if (params.size() != snapshot.size()) return false;
  for (size_t i = 0; i < params.size(); ++i)
    if (!bit_identical(snapshot[i], params[i])) return false;
  return true;
}

}  // namespace mlr
