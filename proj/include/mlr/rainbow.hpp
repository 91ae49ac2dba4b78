#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <vector>

#include "mlr/augment.hpp"
#include "mlr/encoders.hpp"
#include "mlr/errors.hpp"
#include "mlr/replay_buffer.hpp"
#include "mlr/rng.hpp"
#include "mlr/types.hpp"

namespace mlr {

struct RainbowConfig {
  int64_t atoms = 51;
  double v_min = -10.0;
  double v_max = 10.0;
  int64_t multi_step = 10;
  bool double_q = true;
  bool dueling = true;
  double noisy_sigma = 0.5;
  double gamma = 0.99;
  double lr = 1e-4;
  double adam_eps = 1.5e-4;
  double max_grad_norm = 10.0;
  int64_t hidden = 256;
  int64_t batch = 32;
  bool clip_rewards = true;
};

// Linear layer with factorized Gaussian parameter noise. Noise is resampled
// explicitly from a named stream; evaluation zeroes it, leaving the mean
// weights.
class NoisyLinearImpl : public torch::nn::Module {
 public:
  NoisyLinearImpl(int64_t in, int64_t out, double sigma0);

  void resample_noise(Rng& rng);
  void zero_noise();
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t in_, out_;
  torch::Tensor mu_w_, sigma_w_, mu_b_, sigma_b_;
  torch::Tensor eps_in_, eps_out_;  // buffers
};
TORCH_MODULE(NoisyLinear);

// Dueling distributional head over a 51-atom value support.
class RainbowHeadImpl : public torch::nn::Module {
 public:
  RainbowHeadImpl(int64_t latent_dim, int64_t n_actions, const RainbowConfig& cfg);

  // Log-probabilities [B, n_actions, atoms].
  torch::Tensor log_dist(const torch::Tensor& s);
  void resample_noise(Rng& rng);
  void zero_noise();

 private:
  int64_t n_actions_, atoms_;
  bool dueling_;
  NoisyLinear value1_{nullptr}, value2_{nullptr}, adv1_{nullptr}, adv2_{nullptr};
};
TORCH_MODULE(RainbowHead);

// Projects a target distribution onto the fixed support after the Bellman
// shift Tz = r + gamma^n * z (clamped into [v_min, v_max]).
// probs: [B, atoms]; returns [B, atoms]. Mass is conserved exactly.
torch::Tensor project_distribution(const torch::Tensor& probs, const torch::Tensor& tz,
                                   double v_min, double v_max, int64_t atoms);

struct RainbowBatch {
  torch::Tensor obs;        // [B, D, h, w] augmented
  torch::Tensor action;     // [B] long
  torch::Tensor returns;    // [B] n-step discounted reward
  torch::Tensor next_obs;   // [B, D, h, w] augmented, n steps ahead
  torch::Tensor not_done;   // [B]
  torch::Tensor disc;       // [B] gamma^(steps actually taken)
  torch::Tensor weights;    // [B] importance weights
  std::vector<int64_t> indices;
};

// Distributional Q-learning agent with the Rainbow components: double-Q
// action selection, dueling noisy heads, prioritized replay and multi-step
// returns.
class RainbowAgent : public torch::nn::Module {
 public:
  RainbowAgent(const RainbowConfig& cfg, PixelEncoder encoder, int64_t n_actions);

  const RainbowConfig& config() const { return cfg_; }
  PixelEncoder encoder() { return encoder_; }
  PixelEncoder momentum_encoder() { return target_encoder_; }
  int64_t n_actions() const { return n_actions_; }
  torch::Tensor support() const { return support_; }

  Action act(const Observation& obs, bool train_mode, Rng& noise_rng);

  // Assembles an n-step batch by walking forward from prioritized indices;
  // episode-truncated windows use the shorter horizon.
  RainbowBatch make_batch(const ReplayBuffer& buffer, int64_t n, const AugmentSpec& aug,
                          Rng& aug_rng, Rng& sample_rng);

  // Weighted categorical cross-entropy against the projected n-step target.
  // Per-item losses are returned for priority updates.
  std::pair<torch::Tensor, torch::Tensor> loss(const RainbowBatch& batch, Rng& noise_rng);

  void hard_update_targets();

  torch::optim::Adam& optimizer() { return *opt_; }

  void save_optimizers(const std::string& prefix);
  void load_optimizers(const std::string& prefix);

 private:
  RainbowConfig cfg_;
  int64_t n_actions_;
  PixelEncoder encoder_{nullptr}, target_encoder_{nullptr};
  RainbowHead head_{nullptr}, target_head_{nullptr};
  torch::Tensor support_;
  std::unique_ptr<torch::optim::Adam> opt_;
};

}  // namespace mlr
