#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <vector>

#include "mlr/augment.hpp"
#include "mlr/encoders.hpp"
#include "mlr/errors.hpp"
#include "mlr/rng.hpp"
#include "mlr/types.hpp"

namespace mlr {

struct SACConfig {
  double gamma = 0.99;
  double init_temperature = 0.1;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double alpha_lr = 1e-4;
  double alpha_beta1 = 0.5;  // Adam beta1 for the temperature
  double critic_ema = 0.99;  // m_q
  double encoder_ema = 0.95;
  int64_t target_update_freq = 2;
  bool twin_critics = true;
  int64_t hidden = 1024;
  double log_std_min = -10.0;
  double log_std_max = 2.0;
  int64_t batch = 512;
};

// Tanh-squashed Gaussian policy head on the latent state.
class GaussianPolicyImpl : public torch::nn::Module {
 public:
  GaussianPolicyImpl(int64_t latent_dim, int64_t action_dim, int64_t hidden, double log_std_min,
                     double log_std_max);

  // Returns (mu, log_std), log_std squashed into [log_std_min, log_std_max].
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& s);

  // Reparameterized sample: a = tanh(mu + std * eps), with its log-prob
  // under the squashed density. eps: [B, A] standard normal.
  std::pair<torch::Tensor, torch::Tensor> sample(const torch::Tensor& s,
                                                 const torch::Tensor& eps);

  torch::Tensor mean_action(const torch::Tensor& s);

  int64_t action_dim() const { return action_dim_; }

 private:
  int64_t action_dim_;
  double log_std_min_, log_std_max_;
  torch::nn::Sequential trunk_{nullptr};
};
TORCH_MODULE(GaussianPolicy);

// Q(s, a) MLP.
class QNetworkImpl : public torch::nn::Module {
 public:
  QNetworkImpl(int64_t latent_dim, int64_t action_dim, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& s, const torch::Tensor& a);

 private:
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(QNetwork);

// Log-prob of a pre-squash sample u under the squashed density; exposed for
// the quadrature check.
torch::Tensor tanh_gaussian_log_prob(const torch::Tensor& u, const torch::Tensor& mu,
                                     const torch::Tensor& log_std);

struct SacBatch {
  torch::Tensor obs;       // [B, D, h, w], augmented
  torch::Tensor action;    // [B, A]
  torch::Tensor reward;    // [B]
  torch::Tensor next_obs;  // [B, D, h, w], augmented
  torch::Tensor not_done;  // [B]
};

// Soft actor-critic on pixel observations, twin critics with min targets.
// The encoder is shared with the auxiliary objective; the actor path
// detaches it, so only the critic (and auxiliary) losses shape
// representations.
class SacAgent : public torch::nn::Module {
 public:
  SacAgent(const SACConfig& cfg, PixelEncoder encoder, int64_t action_dim);

  const SACConfig& config() const { return cfg_; }
  PixelEncoder encoder() { return encoder_; }
  PixelEncoder momentum_encoder() { return target_encoder_; }
  GaussianPolicy actor() { return actor_; }
  int64_t action_dim() const { return action_dim_; }

  Action act(const Observation& obs, bool train_mode, Rng& noise_rng);

  SacBatch make_batch(const std::vector<Transition>& transitions, const AugmentSpec& aug,
                      Rng& aug_rng);

  // Soft Bellman error, averaged over the twin critics.
  torch::Tensor critic_loss(const SacBatch& batch, Rng& noise_rng);
  torch::Tensor actor_loss(const torch::Tensor& detached_latents, const torch::Tensor& eps,
                           torch::Tensor* log_probs_out = nullptr);
  torch::Tensor alpha_loss(const torch::Tensor& log_probs);

  // One actor + temperature update on the given (already augmented) obs.
  void update_actor_and_alpha(const torch::Tensor& obs, Rng& noise_rng);

  void soft_update_targets();

  torch::optim::Adam& critic_optimizer() { return *critic_opt_; }
  torch::optim::Adam& actor_optimizer() { return *actor_opt_; }
  torch::optim::Adam& alpha_optimizer() { return *alpha_opt_; }

  double alpha() const { return log_alpha_.exp().item<double>(); }
  double target_entropy() const { return -static_cast<double>(action_dim_); }

  void save_optimizers(const std::string& prefix);
  void load_optimizers(const std::string& prefix);

 private:
  torch::Tensor encode_for_act(const Observation& obs);

  SACConfig cfg_;
  int64_t action_dim_;
  PixelEncoder encoder_{nullptr}, target_encoder_{nullptr};
  GaussianPolicy actor_{nullptr};
  QNetwork q1_{nullptr}, q2_{nullptr}, target_q1_{nullptr}, target_q2_{nullptr};
  torch::Tensor log_alpha_;
  std::unique_ptr<torch::optim::Adam> critic_opt_, actor_opt_, alpha_opt_;
};

// Standard-normal tensor filled from a named stream (keeps torch's global
// RNG out of the training path so checkpoints capture all randomness).
torch::Tensor normal_from_rng(torch::IntArrayRef sizes, Rng& rng,
                              torch::Dtype dtype = torch::kFloat32);

}  // namespace mlr
