#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "mlr/errors.hpp"

namespace mlr {

// Pixel observation, stored as 8-bit channels-first [D, H, W] and converted
// to [0,1] floats at sampling time. The pixel buffer is shared so that a
// transition's next_obs and the following transition's obs do not duplicate
// memory in the replay buffer.
class Observation {
 public:
  Observation() = default;
  Observation(int64_t d, int64_t h, int64_t w)
      : d_(d), h_(h), w_(w),
        data_(std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(d * h * w), 0)) {}
  Observation(int64_t d, int64_t h, int64_t w, std::shared_ptr<std::vector<uint8_t>> data)
      : d_(d), h_(h), w_(w), data_(std::move(data)) {
    if (static_cast<int64_t>(data_->size()) != d * h * w)
      throw ShapeMismatch("observation buffer size does not match [D,H,W]");
  }

  int64_t channels() const { return d_; }
  int64_t height() const { return h_; }
  int64_t width() const { return w_; }
  bool empty() const { return data_ == nullptr; }

  const std::vector<uint8_t>& raw() const { return *data_; }
  const std::shared_ptr<std::vector<uint8_t>>& buffer() const { return data_; }

  uint8_t at(int64_t c, int64_t y, int64_t x) const {
    return (*data_)[static_cast<size_t>((c * h_ + y) * w_ + x)];
  }

  // Float tensor in [0,1], shape [D, H, W].
  torch::Tensor to_tensor(torch::Dtype dtype = torch::kFloat32) const {
    auto u8 = torch::from_blob(const_cast<uint8_t*>(data_->data()), {d_, h_, w_},
                               torch::kUInt8);
    return u8.to(dtype).div_(255.0);
  }

  static Observation from_tensor_01(const torch::Tensor& t) {
    if (t.dim() != 3) throw ShapeMismatch("expected [D,H,W] tensor");
    auto u8 = (t.detach().to(torch::kFloat32).clamp(0, 1) * 255.0)
                  .round()
                  .to(torch::kUInt8)
                  .contiguous();
    auto buf = std::make_shared<std::vector<uint8_t>>(
        u8.data_ptr<uint8_t>(), u8.data_ptr<uint8_t>() + u8.numel());
    return Observation(t.size(0), t.size(1), t.size(2), std::move(buf));
  }

 private:
  int64_t d_ = 0, h_ = 0, w_ = 0;
  std::shared_ptr<std::vector<uint8_t>> data_;
};

// Continuous action: real vector. Discrete action: integer id.
struct Action {
  std::variant<std::vector<float>, int64_t> value;

  Action() : value(int64_t{0}) {}
  explicit Action(std::vector<float> v) : value(std::move(v)) {}
  explicit Action(int64_t id) : value(id) {}

  bool is_discrete() const { return std::holds_alternative<int64_t>(value); }
  int64_t discrete() const { return std::get<int64_t>(value); }
  const std::vector<float>& continuous() const { return std::get<std::vector<float>>(value); }
};

struct Transition {
  Observation obs;
  Action action;
  float reward = 0.f;
  Observation next_obs;
  bool done = false;
};

// K contiguous (observation, action) steps with no episode boundary before
// the last step.
struct Trajectory {
  std::vector<Observation> observations;
  std::vector<Action> actions;
  int64_t start_index = 0;

  int64_t length() const { return static_cast<int64_t>(observations.size()); }
};

// Stacks a list of observations into a float tensor [K, D, H, W] in [0,1].
inline torch::Tensor stack_observations(const std::vector<Observation>& obs,
                                        torch::Dtype dtype = torch::kFloat32) {
  std::vector<torch::Tensor> frames;
  frames.reserve(obs.size());
  for (const auto& o : obs) frames.push_back(o.to_tensor(dtype));
  return torch::stack(frames, 0);
}

}  // namespace mlr
