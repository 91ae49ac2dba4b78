#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "mlr/errors.hpp"
#include "mlr/rng.hpp"

namespace mlr {

enum class MaskStrategy { Cube, Spatial, Temporal, Feature };

struct CubeMaskSpec {
  int64_t k = 8;   // cube temporal depth
  int64_t h = 10;  // cube height in pixels
  int64_t w = 10;  // cube width in pixels
  double eta = 0.5;
  MaskStrategy strategy = MaskStrategy::Cube;
  float fill_value = 0.f;
};

// Boolean occupancy over the cube grid plus its expansion to per-pixel
// extents. Boundary cells are truncated to the image bounds.
struct MaskPlan {
  int64_t gk = 0, gh = 0, gw = 0;  // grid dims
  int64_t K = 0, H = 0, W = 0;     // pixel extents
  int64_t ck = 1, ch = 1, cw = 1;  // cell sizes used when expanding
  std::vector<uint8_t> grid;       // gk*gh*gw, 1 = masked

  bool cell(int64_t t, int64_t y, int64_t x) const {
    return grid[static_cast<size_t>((t * gh + y) * gw + x)] != 0;
  }

  int64_t masked_cells() const {
    int64_t n = 0;
    for (auto g : grid) n += g != 0;
    return n;
  }

  // Bool tensor [K, H, W], true where masked.
  torch::Tensor pixel_mask() const {
    auto mask = torch::zeros({K, H, W}, torch::kBool);
    auto acc = mask.accessor<bool, 3>();
    for (int64_t t = 0; t < gk; ++t)
      for (int64_t y = 0; y < gh; ++y)
        for (int64_t x = 0; x < gw; ++x) {
          if (!cell(t, y, x)) continue;
          int64_t t1 = std::min(K, (t + 1) * ck), y1 = std::min(H, (y + 1) * ch),
                  x1 = std::min(W, (x + 1) * cw);
          for (int64_t tt = t * ck; tt < t1; ++tt)
            for (int64_t yy = y * ch; yy < y1; ++yy)
              for (int64_t xx = x * cw; xx < x1; ++xx) acc[tt][yy][xx] = true;
        }
    return mask;
  }
};

namespace detail {

inline int64_t rounded_count(double eta, int64_t n) {
  return std::llround(eta * static_cast<double>(n));
}

// Marks `count` of the `n` grid cells starting at `offset`, chosen uniformly
// without replacement (partial Fisher-Yates).
inline void choose_cells(std::vector<uint8_t>& grid, int64_t offset, int64_t n, int64_t count,
                         Rng& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (int64_t i = 0; i < count; ++i) {
    int64_t j = rng.uniform_int(i, n - 1);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    grid[static_cast<size_t>(offset + idx[static_cast<size_t>(i)])] = 1;
  }
}

}  // namespace detail

// Draws a mask plan for a [K, H, W] sequence (H, W are feature-map extents
// for the feature-space strategy; the caller passes the dims the plan will
// be applied to).
//
// Cube/temporal/feature draw exactly round(eta*N) of the N grid cells.
// Spatial masking draws each frame independently with round(eta*N_frame)
// patches per frame, so grids at different timesteps carry no correlation.
inline MaskPlan sample_mask(const CubeMaskSpec& spec, int64_t K, int64_t H, int64_t W, Rng& rng) {
  if (spec.eta < 0 || spec.eta > 1) throw InvalidSpec("mask ratio must be in [0,1]");
  if (spec.k < 1 || spec.h < 1 || spec.w < 1) throw InvalidSpec("cube dims must be positive");
  if (spec.k > K || spec.h > H || spec.w > W)
    throw InvalidSpec("cube exceeds sequence extents");

  MaskPlan plan;
  plan.K = K;
  plan.H = H;
  plan.W = W;

  auto ceil_div = [](int64_t a, int64_t b) { return (a + b - 1) / b; };

  switch (spec.strategy) {
    case MaskStrategy::Cube:
    case MaskStrategy::Feature: {
      plan.ck = spec.k;
      plan.ch = spec.h;
      plan.cw = spec.w;
      plan.gk = ceil_div(K, spec.k);
      plan.gh = ceil_div(H, spec.h);
      plan.gw = ceil_div(W, spec.w);
      int64_t n = plan.gk * plan.gh * plan.gw;
      plan.grid.assign(static_cast<size_t>(n), 0);
      detail::choose_cells(plan.grid, 0, n, detail::rounded_count(spec.eta, n), rng);
      break;
    }
    case MaskStrategy::Spatial: {
      plan.ck = 1;
      plan.ch = spec.h;
      plan.cw = spec.w;
      plan.gk = K;
      plan.gh = ceil_div(H, spec.h);
      plan.gw = ceil_div(W, spec.w);
      int64_t per_frame = plan.gh * plan.gw;
      plan.grid.assign(static_cast<size_t>(plan.gk * per_frame), 0);
      int64_t count = detail::rounded_count(spec.eta, per_frame);
      for (int64_t t = 0; t < K; ++t)
        detail::choose_cells(plan.grid, t * per_frame, per_frame, count, rng);
      break;
    }
    case MaskStrategy::Temporal: {
      plan.ck = spec.k;
      plan.ch = H;
      plan.cw = W;
      plan.gk = ceil_div(K, spec.k);
      plan.gh = 1;
      plan.gw = 1;
      plan.grid.assign(static_cast<size_t>(plan.gk), 0);
      detail::choose_cells(plan.grid, 0, plan.gk, detail::rounded_count(spec.eta, plan.gk), rng);
      break;
    }
  }
  return plan;
}

// Fills masked pixels with fill_value across all channels; every pixel
// outside the mask is copied bit-exactly. Input is not mutated.
// seq: [K, D, H, W].
inline torch::Tensor apply_mask(const torch::Tensor& seq, const MaskPlan& plan,
                                const CubeMaskSpec& spec) {
  if (seq.dim() != 4) throw ShapeMismatch("apply_mask expects [K,D,H,W]");
  if (seq.size(0) != plan.K || seq.size(2) != plan.H || seq.size(3) != plan.W)
    throw ShapeMismatch("mask plan does not match sequence extents");
  auto mask = plan.pixel_mask().unsqueeze(1);  // [K,1,H,W]
  auto fill = torch::full({}, spec.fill_value, seq.options());
  return torch::where(mask, fill, seq);
}

// Feature-space variant: features [K, C, Hf, Wf] masked under a plan drawn
// on the feature extents. Differentiable w.r.t. the unmasked positions.
inline torch::Tensor apply_feature_mask(const torch::Tensor& features, const MaskPlan& plan,
                                        const CubeMaskSpec& spec) {
  return apply_mask(features, plan, spec);
}

}  // namespace mlr
