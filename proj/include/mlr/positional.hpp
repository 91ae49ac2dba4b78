#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>

namespace mlr {

// Sinusoidal positional table:
//   p[pos, 2j]   = sin(pos / 10000^(2j/d))
//   p[pos, 2j+1] = cos(pos / 10000^(2j/d))
// Row 0 alternates 0 (even dims) and 1 (odd dims). Positions are indexed
// 0..K-1 within each sampled window.
class PositionalEmbedding {
 public:
  PositionalEmbedding() = default;
  PositionalEmbedding(int64_t max_pos, int64_t width, torch::Dtype dtype = torch::kFloat32) {
    table_ = torch::empty({max_pos, width}, torch::kFloat64);
    auto acc = table_.accessor<double, 2>();
    for (int64_t pos = 0; pos < max_pos; ++pos) {
      for (int64_t dim = 0; dim < width; ++dim) {
        int64_t two_j = dim - (dim % 2);
        double angle = static_cast<double>(pos) /
                       std::pow(10000.0, static_cast<double>(two_j) / static_cast<double>(width));
        acc[pos][dim] = (dim % 2 == 0) ? std::sin(angle) : std::cos(angle);
      }
    }
    table_ = table_.to(dtype);
  }

  const torch::Tensor& table() const { return table_; }
  torch::Tensor rows(int64_t count) const { return table_.slice(0, 0, count); }
  int64_t max_pos() const { return table_.size(0); }
  int64_t width() const { return table_.size(1); }

 private:
  torch::Tensor table_;
};

}  // namespace mlr
