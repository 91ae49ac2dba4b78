#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>

#include "mlr/errors.hpp"
#include "mlr/rng.hpp"

namespace mlr {

struct CropSpec {
  int64_t margin = 0;  // replicate-padding added per side before cropping
  int64_t out_h = 84;
  int64_t out_w = 84;
};

struct IntensitySpec {
  double scale = 0.05;
  double clip = 2.0;
};

struct AugmentSpec {
  CropSpec crop;
  IntensitySpec intensity;
};

struct CropDraw {
  int64_t dy = 0, dx = 0;
};

inline CropDraw sample_crop(const torch::Tensor& seq, const CropSpec& spec, Rng& rng) {
  int64_t src_h = seq.size(-2) + 2 * spec.margin;
  int64_t src_w = seq.size(-1) + 2 * spec.margin;
  if (spec.out_h > src_h || spec.out_w > src_w)
    throw InvalidSpec("crop output exceeds padded source");
  CropDraw d;
  d.dy = rng.uniform_int(0, src_h - spec.out_h);
  d.dx = rng.uniform_int(0, src_w - spec.out_w);
  return d;
}

// One crop offset shared across all K timesteps of a sequence view.
// seq: [K, D, H, W].
inline torch::Tensor crop_at(const torch::Tensor& seq, const CropSpec& spec, const CropDraw& d) {
  torch::Tensor src = seq;
  if (spec.margin > 0)
    src = torch::replication_pad2d(seq, {spec.margin, spec.margin, spec.margin, spec.margin});
  if (src.size(-2) == spec.out_h && src.size(-1) == spec.out_w && d.dy == 0 && d.dx == 0)
    return seq.clone();
  return src.slice(-2, d.dy, d.dy + spec.out_h).slice(-1, d.dx, d.dx + spec.out_w).contiguous();
}

inline torch::Tensor random_crop(const torch::Tensor& seq, const CropSpec& spec, Rng& rng) {
  return crop_at(seq, spec, sample_crop(seq, spec, rng));
}

inline double sample_intensity(const IntensitySpec& spec, Rng& rng) {
  double r = std::clamp(rng.normal(), -spec.clip, spec.clip);
  return 1.0 + spec.scale * r;
}

// out = in * (1 + scale * clipped_normal), one multiplier per sequence,
// re-clamped to the [0,1] pixel range.
inline torch::Tensor intensity_at(const torch::Tensor& seq, double multiplier) {
  return (seq * multiplier).clamp(0.0, 1.0);
}

inline torch::Tensor random_intensity(const torch::Tensor& seq, const IntensitySpec& spec,
                                      Rng& rng) {
  if (spec.scale < 0 || spec.clip < 0) throw InvalidSpec("intensity scale/clip must be >= 0");
  return intensity_at(seq, sample_intensity(spec, rng));
}

struct AugmentDraw {
  CropDraw crop;
  double intensity = 1.0;
};

inline AugmentDraw sample_augment(const torch::Tensor& seq, const AugmentSpec& spec, Rng& rng) {
  AugmentDraw d;
  d.crop = sample_crop(seq, spec.crop, rng);
  d.intensity = sample_intensity(spec.intensity, rng);
  return d;
}

inline torch::Tensor augment_at(const torch::Tensor& seq, const AugmentSpec& spec,
                                const AugmentDraw& d) {
  return intensity_at(crop_at(seq, spec.crop, d.crop), d.intensity);
}

inline torch::Tensor augment_sequence(const torch::Tensor& seq, const AugmentSpec& spec,
                                      Rng& rng) {
  return augment_at(seq, spec, sample_augment(seq, spec, rng));
}

// Deterministic center crop used on the acting/evaluation path when the
// stored observation is larger than the encoder input.
inline torch::Tensor center_crop(const torch::Tensor& x, int64_t out_h, int64_t out_w) {
  int64_t h = x.size(-2), w = x.size(-1);
  if (h == out_h && w == out_w) return x;
  if (h < out_h || w < out_w) throw ShapeMismatch("center_crop source smaller than target");
  int64_t dy = (h - out_h) / 2, dx = (w - out_w) / 2;
  return x.slice(-2, dy, dy + out_h).slice(-1, dx, dx + out_w).contiguous();
}

// Box-filter resize for adapting external render sizes; exact mean pooling
// when the ratio is integral.
inline torch::Tensor resize_area(const torch::Tensor& x, int64_t out_h, int64_t out_w) {
  bool batched = x.dim() == 4;
  auto y = batched ? x : x.unsqueeze(0);
  y = torch::adaptive_avg_pool2d(y, {out_h, out_w});
  return batched ? y : y.squeeze(0);
}

}  // namespace mlr
