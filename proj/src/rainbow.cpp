#include "mlr/rainbow.hpp"

#include <cmath>

#include "mlr/momentum.hpp"
#include "mlr/sac.hpp"  // normal_from_rng

namespace mlr {

// ---------------------------------------------------------------------------
// NoisyLinear

NoisyLinearImpl::NoisyLinearImpl(int64_t in, int64_t out, double sigma0) : in_(in), out_(out) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  mu_w_ = register_parameter("mu_w", torch::empty({out, in}).uniform_(-bound, bound));
  sigma_w_ = register_parameter(
      "sigma_w", torch::full({out, in}, sigma0 / std::sqrt(static_cast<double>(in))));
  mu_b_ = register_parameter("mu_b", torch::empty({out}).uniform_(-bound, bound));
  sigma_b_ = register_parameter(
      "sigma_b", torch::full({out}, sigma0 / std::sqrt(static_cast<double>(in))));
  eps_in_ = register_buffer("eps_in", torch::zeros({in}));
  eps_out_ = register_buffer("eps_out", torch::zeros({out}));
}

namespace {
torch::Tensor noise_transform(const torch::Tensor& x) { return x.sign() * x.abs().sqrt(); }
}  // namespace

void NoisyLinearImpl::resample_noise(Rng& rng) {
  torch::NoGradGuard no_grad;
  eps_in_.copy_(noise_transform(normal_from_rng({in_}, rng)));
  eps_out_.copy_(noise_transform(normal_from_rng({out_}, rng)));
}

void NoisyLinearImpl::zero_noise() {
  torch::NoGradGuard no_grad;
  eps_in_.zero_();
  eps_out_.zero_();
}

torch::Tensor NoisyLinearImpl::forward(const torch::Tensor& x) {
  auto w = mu_w_ + sigma_w_ * torch::outer(eps_out_, eps_in_);
  auto b = mu_b_ + sigma_b_ * eps_out_;
  return torch::nn::functional::linear(x, w, b);
}

// ---------------------------------------------------------------------------
// RainbowHead

RainbowHeadImpl::RainbowHeadImpl(int64_t latent_dim, int64_t n_actions, const RainbowConfig& cfg)
    : n_actions_(n_actions), atoms_(cfg.atoms), dueling_(cfg.dueling) {
  adv1_ = register_module("adv1", NoisyLinear(latent_dim, cfg.hidden, cfg.noisy_sigma));
  adv2_ = register_module("adv2",
                          NoisyLinear(cfg.hidden, n_actions * cfg.atoms, cfg.noisy_sigma));
  if (dueling_) {
    value1_ = register_module("value1", NoisyLinear(latent_dim, cfg.hidden, cfg.noisy_sigma));
    value2_ = register_module("value2", NoisyLinear(cfg.hidden, cfg.atoms, cfg.noisy_sigma));
  }
}

torch::Tensor RainbowHeadImpl::log_dist(const torch::Tensor& s) {
  auto adv = adv2_(torch::relu(adv1_(s))).view({s.size(0), n_actions_, atoms_});
  torch::Tensor logits;
  if (dueling_) {
    auto value = value2_(torch::relu(value1_(s))).view({s.size(0), 1, atoms_});
    logits = value + adv - adv.mean(1, /*keepdim=*/true);
  } else {
    logits = adv;
  }
  return torch::log_softmax(logits, 2);
}

void RainbowHeadImpl::resample_noise(Rng& rng) {
  adv1_->resample_noise(rng);
  adv2_->resample_noise(rng);
  if (dueling_) {
    value1_->resample_noise(rng);
    value2_->resample_noise(rng);
  }
}

void RainbowHeadImpl::zero_noise() {
  adv1_->zero_noise();
  adv2_->zero_noise();
  if (dueling_) {
    value1_->zero_noise();
    value2_->zero_noise();
  }
}

// ---------------------------------------------------------------------------
// Distribution projection

torch::Tensor project_distribution(const torch::Tensor& probs, const torch::Tensor& tz,
                                   double v_min, double v_max, int64_t atoms) {
  double delta = (v_max - v_min) / static_cast<double>(atoms - 1);
  auto clamped = tz.clamp(v_min, v_max);
  auto b = (clamped - v_min) / delta;                 // [B, atoms]
  auto lower = b.floor().clamp(0, atoms - 1);
  auto upper = b.ceil().clamp(0, atoms - 1);
  // When b lands exactly on an atom, give it the full mass via the lower bin.
  auto exact = (upper == lower).to(probs.dtype());
  auto lower_mass = probs * (upper - b + exact);
  auto upper_mass = probs * (b - lower);
  auto out = torch::zeros_like(probs);
  out.scatter_add_(1, lower.to(torch::kLong), lower_mass);
  out.scatter_add_(1, upper.to(torch::kLong), upper_mass);
  return out;
}

// ---------------------------------------------------------------------------
// RainbowAgent

RainbowAgent::RainbowAgent(const RainbowConfig& cfg, PixelEncoder encoder, int64_t n_actions)
    : cfg_(cfg), n_actions_(n_actions), encoder_(encoder) {
  register_module("encoder", encoder_.ptr());
  target_encoder_ = PixelEncoder(encoder_->config());
  register_module("target_encoder", target_encoder_.ptr());

  int64_t d = encoder_->latent_dim();
  head_ = register_module("head", RainbowHead(d, n_actions, cfg));
  target_head_ = register_module("target_head", RainbowHead(d, n_actions, cfg));
  support_ = register_buffer("support", torch::linspace(cfg.v_min, cfg.v_max, cfg.atoms));

  hard_update_targets();
  freeze(*target_encoder_);
  freeze(*target_head_);

  std::vector<torch::Tensor> params = encoder_->parameters();
  for (auto& p : head_->parameters()) params.push_back(p);
  opt_ = std::make_unique<torch::optim::Adam>(
      params, torch::optim::AdamOptions(cfg.lr).eps(cfg.adam_eps));
}

Action RainbowAgent::act(const Observation& obs, bool train_mode, Rng& noise_rng) {
  torch::NoGradGuard no_grad;
  if (train_mode)
    head_->resample_noise(noise_rng);
  else
    head_->zero_noise();
  auto cfg = encoder_->config();
  auto x = center_crop(obs.to_tensor(), cfg.in_h, cfg.in_w).unsqueeze(0);
  auto log_p = head_->log_dist(encoder_->forward(x));  // [1, A, atoms]
  auto q = (log_p.exp() * support_).sum(2);            // [1, A]
  return Action(q.argmax(1).item<int64_t>());
}

RainbowBatch RainbowAgent::make_batch(const ReplayBuffer& buffer, int64_t n,
                                      const AugmentSpec& aug, Rng& aug_rng, Rng& sample_rng) {
  // Reserve the newest multi_step-1 indices so the forward walk stays inside
  // the buffer.
  int64_t reserve = cfg_.multi_step - 1;
  PrioritizedBatch sampled;
  if (buffer.prioritized()) {
    sampled = buffer.sample_prioritized(n, sample_rng, reserve);
  } else {
    sampled.indices = buffer.sample_indices(n, sample_rng, reserve);
    sampled.weights.assign(static_cast<size_t>(n), 1.f);
  }

  std::vector<torch::Tensor> obs, next_obs;
  auto action = torch::empty({n}, torch::kLong);
  auto returns = torch::empty({n}, torch::kFloat32);
  auto not_done = torch::empty({n}, torch::kFloat32);
  auto disc = torch::empty({n}, torch::kFloat32);
  auto weights = torch::empty({n}, torch::kFloat32);

  for (int64_t i = 0; i < n; ++i) {
    int64_t idx = sampled.indices[static_cast<size_t>(i)];
    const Transition& first = buffer.get(idx);
    obs.push_back(
        augment_sequence(first.obs.to_tensor().unsqueeze(0), aug, aug_rng).squeeze(0));
    action[i] = first.action.discrete();
    float ret = 0.f;
    double g = 1.0;
    int64_t j = 0;
    bool terminal = false;
    for (; j < cfg_.multi_step; ++j) {
      const Transition& t = buffer.get(idx + j);
      float r = cfg_.clip_rewards ? std::clamp(t.reward, -1.f, 1.f) : t.reward;
      ret += static_cast<float>(g) * r;
      g *= cfg_.gamma;
      if (t.done) {
        terminal = true;
        break;
      }
    }
    const Transition& last = buffer.get(idx + std::min(j, cfg_.multi_step - 1));
    next_obs.push_back(
        augment_sequence(last.next_obs.to_tensor().unsqueeze(0), aug, aug_rng).squeeze(0));
    returns[i] = ret;
    not_done[i] = terminal ? 0.f : 1.f;
    disc[i] = static_cast<float>(g);
    weights[i] = sampled.weights[static_cast<size_t>(i)];
  }

  RainbowBatch batch;
  batch.obs = torch::stack(obs, 0);
  batch.action = action;
  batch.returns = returns;
  batch.next_obs = torch::stack(next_obs, 0);
  batch.not_done = not_done;
  batch.disc = disc;
  batch.weights = weights;
  batch.indices = std::move(sampled.indices);
  return batch;
}

std::pair<torch::Tensor, torch::Tensor> RainbowAgent::loss(const RainbowBatch& batch,
                                                           Rng& noise_rng) {
  int64_t b = batch.obs.size(0);
  torch::Tensor target_m;
  {
    torch::NoGradGuard no_grad;
    head_->resample_noise(noise_rng);
    target_head_->resample_noise(noise_rng);
    auto s2_online = encoder_->forward(batch.next_obs);
    auto s2_target = target_encoder_->forward(batch.next_obs);
    auto next_online = head_->log_dist(s2_online).exp();
    auto q_online = (next_online * support_).sum(2);  // [B, A]
    auto a_star = cfg_.double_q
                      ? q_online.argmax(1)
                      : ((target_head_->log_dist(s2_target).exp() * support_).sum(2)).argmax(1);
    auto next_target = target_head_->log_dist(s2_target).exp();
    auto idx = a_star.view({b, 1, 1}).expand({b, 1, cfg_.atoms});
    auto p_next = next_target.gather(1, idx).squeeze(1);  // [B, atoms]
    auto tz = batch.returns.unsqueeze(1) +
              batch.disc.unsqueeze(1) * batch.not_done.unsqueeze(1) * support_.unsqueeze(0);
    target_m = project_distribution(p_next, tz, cfg_.v_min, cfg_.v_max, cfg_.atoms);
  }
  head_->resample_noise(noise_rng);
  auto log_p = head_->log_dist(encoder_->forward(batch.obs));  // [B, A, atoms]
  auto idx = batch.action.view({b, 1, 1}).expand({b, 1, cfg_.atoms});
  auto log_p_a = log_p.gather(1, idx).squeeze(1);  // [B, atoms]
  auto per_item = -(target_m * log_p_a).sum(1);    // cross-entropy
  auto loss = (batch.weights * per_item).mean();
  if (!std::isfinite(loss.item<double>())) throw NumericalError("rainbow loss not finite");
  return {loss, per_item.detach()};
}

void RainbowAgent::hard_update_targets() {
  hard_sync(*encoder_, *target_encoder_);
  hard_sync(*head_, *target_head_);
}

void RainbowAgent::save_optimizers(const std::string& prefix) {
  torch::save(*opt_, prefix + ".opt.pt");
}

void RainbowAgent::load_optimizers(const std::string& prefix) {
  torch::load(*opt_, prefix + ".opt.pt");
}

}  // namespace mlr
