#include "mlr/sac.hpp"

#include <cmath>

#include "mlr/momentum.hpp"

namespace mlr {

torch::Tensor normal_from_rng(torch::IntArrayRef sizes, Rng& rng, torch::Dtype dtype) {
  auto t = torch::empty(sizes, torch::kFloat64);
  auto flat = t.view(-1);
  auto acc = flat.accessor<double, 1>();
  for (int64_t i = 0; i < flat.numel(); ++i) acc[i] = rng.normal();
  return t.to(dtype);
}

// ---------------------------------------------------------------------------
// GaussianPolicy

GaussianPolicyImpl::GaussianPolicyImpl(int64_t latent_dim, int64_t action_dim, int64_t hidden,
                                       double log_std_min, double log_std_max)
    : action_dim_(action_dim), log_std_min_(log_std_min), log_std_max_(log_std_max) {
  namespace nn = torch::nn;
  trunk_ = register_module(
      "trunk", nn::Sequential(nn::Linear(latent_dim, hidden), nn::Functional(torch::relu),
                              nn::Linear(hidden, hidden), nn::Functional(torch::relu),
                              nn::Linear(hidden, 2 * action_dim)));
}

std::pair<torch::Tensor, torch::Tensor> GaussianPolicyImpl::forward(const torch::Tensor& s) {
  auto out = trunk_->forward(s);
  auto mu = out.slice(1, 0, action_dim_);
  auto log_std = out.slice(1, action_dim_, 2 * action_dim_);
  // Squash into the configured band, as in the pixel-SAC lineage.
  log_std = torch::tanh(log_std);
  log_std = log_std_min_ + 0.5 * (log_std_max_ - log_std_min_) * (log_std + 1.0);
  return {mu, log_std};
}

torch::Tensor tanh_gaussian_log_prob(const torch::Tensor& u, const torch::Tensor& mu,
                                     const torch::Tensor& log_std) {
  constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
  auto var = (2.0 * log_std).exp();
  auto gauss = -0.5 * ((u - mu).pow(2) / var + 2.0 * log_std + kLog2Pi);
  // log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u)), numerically stable.
  auto correction = 2.0 * (std::log(2.0) - u - torch::softplus(-2.0 * u));
  return (gauss - correction).sum(1);
}

std::pair<torch::Tensor, torch::Tensor> GaussianPolicyImpl::sample(const torch::Tensor& s,
                                                                   const torch::Tensor& eps) {
  auto [mu, log_std] = forward(s);
  auto u = mu + log_std.exp() * eps;
  auto a = torch::tanh(u);
  auto log_prob = tanh_gaussian_log_prob(u, mu, log_std);
  return {a, log_prob};
}

torch::Tensor GaussianPolicyImpl::mean_action(const torch::Tensor& s) {
  auto [mu, log_std] = forward(s);
  (void)log_std;
  return torch::tanh(mu);
}

// ---------------------------------------------------------------------------
// QNetwork

QNetworkImpl::QNetworkImpl(int64_t latent_dim, int64_t action_dim, int64_t hidden) {
  namespace nn = torch::nn;
  net_ = register_module(
      "net", nn::Sequential(nn::Linear(latent_dim + action_dim, hidden),
                            nn::Functional(torch::relu), nn::Linear(hidden, hidden),
                            nn::Functional(torch::relu), nn::Linear(hidden, 1)));
}

torch::Tensor QNetworkImpl::forward(const torch::Tensor& s, const torch::Tensor& a) {
  return net_->forward(torch::cat({s, a}, 1)).squeeze(1);
}

// ---------------------------------------------------------------------------
// SacAgent

SacAgent::SacAgent(const SACConfig& cfg, PixelEncoder encoder, int64_t action_dim)
    : cfg_(cfg), action_dim_(action_dim), encoder_(encoder) {
  register_module("encoder", encoder_.ptr());
  target_encoder_ = PixelEncoder(encoder_->config());
  register_module("target_encoder", target_encoder_.ptr());

  int64_t d = encoder_->latent_dim();
  actor_ = register_module("actor", GaussianPolicy(d, action_dim, cfg.hidden, cfg.log_std_min,
                                                   cfg.log_std_max));
  q1_ = register_module("q1", QNetwork(d, action_dim, cfg.hidden));
  q2_ = register_module("q2", QNetwork(d, action_dim, cfg.hidden));
  target_q1_ = register_module("target_q1", QNetwork(d, action_dim, cfg.hidden));
  target_q2_ = register_module("target_q2", QNetwork(d, action_dim, cfg.hidden));

  log_alpha_ = register_parameter(
      "log_alpha", torch::full({1}, std::log(cfg.init_temperature), torch::kFloat32));

  hard_sync(*encoder_, *target_encoder_);
  hard_sync(*q1_, *target_q1_);
  hard_sync(*q2_, *target_q2_);
  freeze(*target_encoder_);
  freeze(*target_q1_);
  freeze(*target_q2_);

  std::vector<torch::Tensor> critic_params = encoder_->parameters();
  for (auto& p : q1_->parameters()) critic_params.push_back(p);
  for (auto& p : q2_->parameters()) critic_params.push_back(p);
  critic_opt_ = std::make_unique<torch::optim::Adam>(critic_params,
                                                     torch::optim::AdamOptions(cfg.critic_lr));
  actor_opt_ = std::make_unique<torch::optim::Adam>(actor_->parameters(),
                                                    torch::optim::AdamOptions(cfg.actor_lr));
  alpha_opt_ = std::make_unique<torch::optim::Adam>(
      std::vector<torch::Tensor>{log_alpha_},
      torch::optim::AdamOptions(cfg.alpha_lr).betas({cfg.alpha_beta1, 0.999}));
}

torch::Tensor SacAgent::encode_for_act(const Observation& obs) {
  auto cfg = encoder_->config();
  auto x = center_crop(obs.to_tensor(), cfg.in_h, cfg.in_w).unsqueeze(0);
  return encoder_->forward(x);
}

Action SacAgent::act(const Observation& obs, bool train_mode, Rng& noise_rng) {
  torch::NoGradGuard no_grad;
  auto s = encode_for_act(obs);
  torch::Tensor a;
  if (train_mode) {
    auto eps = normal_from_rng({1, action_dim_}, noise_rng);
    a = actor_->sample(s, eps).first;
  } else {
    a = actor_->mean_action(s);
  }
  std::vector<float> v(static_cast<size_t>(action_dim_));
  for (int64_t i = 0; i < action_dim_; ++i) v[static_cast<size_t>(i)] = a[0][i].item<float>();
  return Action(std::move(v));
}

SacBatch SacAgent::make_batch(const std::vector<Transition>& transitions, const AugmentSpec& aug,
                              Rng& aug_rng) {
  int64_t b = static_cast<int64_t>(transitions.size());
  std::vector<torch::Tensor> obs, next_obs;
  obs.reserve(static_cast<size_t>(b));
  next_obs.reserve(static_cast<size_t>(b));
  auto reward = torch::empty({b}, torch::kFloat32);
  auto not_done = torch::empty({b}, torch::kFloat32);
  auto action = torch::empty({b, action_dim_}, torch::kFloat32);
  for (int64_t i = 0; i < b; ++i) {
    const auto& t = transitions[static_cast<size_t>(i)];
    obs.push_back(augment_sequence(t.obs.to_tensor().unsqueeze(0), aug, aug_rng).squeeze(0));
    next_obs.push_back(
        augment_sequence(t.next_obs.to_tensor().unsqueeze(0), aug, aug_rng).squeeze(0));
    reward[i] = t.reward;
    not_done[i] = t.done ? 0.f : 1.f;
    for (int64_t j = 0; j < action_dim_; ++j)
      action[i][j] = t.action.continuous()[static_cast<size_t>(j)];
  }
  return {torch::stack(obs, 0), action, reward, torch::stack(next_obs, 0), not_done};
}

torch::Tensor SacAgent::critic_loss(const SacBatch& batch, Rng& noise_rng) {
  torch::Tensor target;
  {
    torch::NoGradGuard no_grad;
    auto s2 = target_encoder_->forward(batch.next_obs);
    auto eps = normal_from_rng({batch.next_obs.size(0), action_dim_}, noise_rng);
    auto [a2, logp2] = actor_->sample(s2, eps);
    auto tq1 = target_q1_->forward(s2, a2);
    auto tq = cfg_.twin_critics ? torch::min(tq1, target_q2_->forward(s2, a2)) : tq1;
    auto v = tq - log_alpha_.exp().detach() * logp2;
    target = batch.reward + cfg_.gamma * batch.not_done * v;
  }
  auto s = encoder_->forward(batch.obs);
  auto q1 = q1_->forward(s, batch.action);
  auto loss = torch::mse_loss(q1, target);
  if (cfg_.twin_critics) {
    auto q2 = q2_->forward(s, batch.action);
    loss = 0.5 * (loss + torch::mse_loss(q2, target));
  }
  if (!std::isfinite(loss.item<double>())) throw NumericalError("critic loss not finite");
  return loss;
}

torch::Tensor SacAgent::actor_loss(const torch::Tensor& detached_latents,
                                   const torch::Tensor& eps, torch::Tensor* log_probs_out) {
  auto [a, logp] = actor_->sample(detached_latents, eps);
  auto q1 = q1_->forward(detached_latents, a);
  auto q = cfg_.twin_critics ? torch::min(q1, q2_->forward(detached_latents, a)) : q1;
  if (log_probs_out) *log_probs_out = logp;
  auto loss = (log_alpha_.exp().detach() * logp - q).mean();
  if (!std::isfinite(loss.item<double>())) throw NumericalError("actor loss not finite");
  return loss;
}

torch::Tensor SacAgent::alpha_loss(const torch::Tensor& log_probs) {
  return (-log_alpha_.exp() * (log_probs.detach() + target_entropy())).mean();
}

void SacAgent::update_actor_and_alpha(const torch::Tensor& obs, Rng& noise_rng) {
  torch::Tensor s;
  {
    torch::NoGradGuard no_grad;
    s = encoder_->forward(obs);
  }
  auto eps = normal_from_rng({obs.size(0), action_dim_}, noise_rng);
  torch::Tensor logp;
  auto a_loss = actor_loss(s, eps, &logp);
  actor_opt_->zero_grad();
  a_loss.backward();
  actor_opt_->step();

  auto t_loss = alpha_loss(logp);
  alpha_opt_->zero_grad();
  t_loss.backward();
  alpha_opt_->step();
}

void SacAgent::soft_update_targets() {
  ema_update(*q1_, *target_q1_, cfg_.critic_ema);
  ema_update(*q2_, *target_q2_, cfg_.critic_ema);
  ema_update(*encoder_, *target_encoder_, cfg_.encoder_ema);
}

void SacAgent::save_optimizers(const std::string& prefix) {
  torch::save(*critic_opt_, prefix + ".critic_opt.pt");
  torch::save(*actor_opt_, prefix + ".actor_opt.pt");
  torch::save(*alpha_opt_, prefix + ".alpha_opt.pt");
}

void SacAgent::load_optimizers(const std::string& prefix) {
  torch::load(*critic_opt_, prefix + ".critic_opt.pt");
  torch::load(*actor_opt_, prefix + ".actor_opt.pt");
  torch::load(*alpha_opt_, prefix + ".alpha_opt.pt");
}

}  // namespace mlr
