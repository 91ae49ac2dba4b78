#include "test_common.hpp"

#include <cmath>

#include "mlr/env.hpp"
#include "mlr/objective.hpp"

using namespace mlr;

namespace {

EncoderConfig tiny_encoder_config() {
  EncoderConfig cfg;
  cfg.variant = EncoderVariant::Continuous;
  cfg.in_channels = 2;
  cfg.in_h = cfg.in_w = 16;
  cfg.latent_dim = 8;
  cfg.conv_channels = 4;
  return cfg;
}

MLRConfig tiny_mlr_config() {
  MLRConfig cfg;
  cfg.K = 4;
  cfg.mask.k = 2;
  cfg.mask.h = 8;
  cfg.mask.w = 8;
  cfg.mask.eta = 0.5;
  cfg.heads.hidden = 8;
  cfg.heads.proj_dim = 8;
  cfg.aug.crop.margin = 0;
  cfg.aug.crop.out_h = cfg.aug.crop.out_w = 16;
  cfg.aug.intensity.scale = 0.05;
  cfg.decoder_layers = 1;
  cfg.aux_batch = 4;
  cfg.warmup_steps = 0;
  cfg.ema_m = 0.95;
  return cfg;
}

std::pair<torch::Tensor, torch::Tensor> random_batch(int64_t b, int64_t k, torch::Dtype dtype,
                                                     uint64_t seed) {
  torch::manual_seed(seed);
  auto obs = torch::rand({b, k, 2, 16, 16}, dtype);
  auto actions = torch::rand({b, k, 2}, dtype) * 2 - 1;
  return {obs, actions};
}

void zero_params(torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  for (auto& p : m.parameters()) p.zero_();
}

}  // namespace

TEST_CASE("warmup_lr follows the inverse-sqrt schedule") {
  const double lr0 = 5e-4;
  SUBCASE("crossover at step = warmup") {
    double lr = warmup_lr(lr0, 6000, 6000);
    CHECK(lr == doctest::Approx(lr0 / std::sqrt(6000.0)).epsilon(1e-12));
  }
  SUBCASE("step 1 of 6000") {
    CHECK(warmup_lr(lr0, 1, 6000) == doctest::Approx(lr0 * 2.1517e-6).epsilon(1e-4));
  }
  SUBCASE("step 4*warmup decays to half the peak") {
    double peak = warmup_lr(lr0, 6000, 6000);
    CHECK(warmup_lr(lr0, 24000, 6000) == doctest::Approx(peak / 2).epsilon(1e-12));
  }
  SUBCASE("step 0 is invalid") { CHECK_THROWS_AS(warmup_lr(lr0, 0, 6000), InvalidArgument); }
}

TEST_CASE("total_loss arithmetic and domain") {
  CHECK(total_loss(1.7, 0.9, 0.0) == doctest::Approx(1.7));
  CHECK(total_loss(1.5, 0.4, 1.0) == doctest::Approx(1.9));
  CHECK(total_loss(2.0, 0.1, 5.0) == doctest::Approx(2.5));
  CHECK_THROWS_AS(total_loss(std::nan(""), 0.1, 1.0), NumericalError);
}

TEST_CASE("cosine reconstruction loss geometry") {
  auto a = torch::tensor({{1.f, 0.f}});
  auto b = torch::tensor({{0.f, 1.f}});
  CHECK(cosine_reconstruction_loss(a, b).item<double>() == doctest::Approx(1.0));
  CHECK(cosine_reconstruction_loss(a, -a).item<double>() == doctest::Approx(2.0));
  CHECK(cosine_reconstruction_loss(a, a * 3).item<double>() == doctest::Approx(0.0));
}

TEST_CASE("cosine loss stays in [0,2] for random inputs and networks") {
  torch::manual_seed(21);
  auto cfg = tiny_mlr_config();
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  Rng mask_rng(1), aug_rng(2);
  for (int i = 0; i < 20; ++i) {
    auto [obs, actions] = random_batch(2, 4, torch::kFloat32, 100 + i);
    auto [loss, report] = obj.compute_loss(obs, actions, mask_rng, aug_rng);
    CHECK(report.loss >= 0.0);
    CHECK(report.loss <= 2.0);
    for (double s : report.per_step_similarities) {
      CHECK(s >= -1.0);
      CHECK(s <= 1.0);
    }
  }
}

TEST_CASE("degenerate chain: no mask, synced momentum, no heads, identity decoder") {
  auto cfg = tiny_mlr_config();
  cfg.mask.eta = 0.0;
  cfg.heads.use_projection = false;
  cfg.heads.use_prediction = false;
  cfg.aug.intensity.scale = 0.0;
  cfg.decoder_pos_embeddings = false;
  torch::manual_seed(33);
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  zero_params(*obj.decoder());  // residual path only
  obj.sync_momentum();

  Rng mask_rng(1), aug_rng(2);
  auto [obs, actions] = random_batch(2, 4, torch::kFloat32, 7);
  auto [loss, report] = obj.compute_loss(obs, actions, mask_rng, aug_rng);
  CHECK(report.loss < 1e-6);
}

TEST_CASE("mse on normalized vectors equals twice the cosine loss") {
  torch::manual_seed(5);
  auto cfg = tiny_mlr_config();
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  auto [obs, actions] = random_batch(2, 4, torch::kFloat32, 11);
  Rng mask_a(3), aug_a(4);
  auto draws = obj.sample_draws(obs, mask_a, aug_a);
  auto [cos_loss, cos_rep] = obj.loss_with_draws(obs, actions, draws);

  auto cfg2 = cfg;
  cfg2.loss_metric = LossMetric::Mse;
  MlrObjective obj2(cfg2, enc, nullptr, 2, false);
  // same encoder; replicate decoder/head weights so both losses see the
  // same predictions
  {
    torch::NoGradGuard no_grad;
    auto src = obj.named_parameters();
    for (auto& item : obj2.named_parameters())
      if (src.contains(item.key())) item.value().copy_(*src.find(item.key()));
  }
  auto [mse_loss, mse_rep] = obj2.loss_with_draws(obs, actions, draws);
  CHECK(mse_loss.item<double>() == doctest::Approx(2.0 * cos_loss.item<double>()).epsilon(1e-5));
}

TEST_CASE("gradients flow only into online networks") {
  torch::manual_seed(9);
  auto cfg = tiny_mlr_config();
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  auto [obs, actions] = random_batch(2, 4, torch::kFloat32, 13);
  Rng mask_rng(1), aug_rng(2);
  auto [loss, report] = obj.compute_loss(obs, actions, mask_rng, aug_rng);
  loss.backward();

  for (auto& p : obj.momentum_encoder()->parameters()) CHECK_FALSE(p.grad().defined());
  for (auto& p : obj.momentum_projection()->parameters()) CHECK_FALSE(p.grad().defined());
  bool any_enc = false, any_dec = false, any_proj = false, any_pred = false;
  for (auto& p : obj.encoder()->parameters()) any_enc |= p.grad().defined();
  for (auto& p : obj.decoder()->parameters()) any_dec |= p.grad().defined();
  for (auto& p : obj.projection()->parameters()) any_proj |= p.grad().defined();
  for (auto& p : obj.prediction()->parameters()) any_pred |= p.grad().defined();
  CHECK(any_enc);
  CHECK(any_dec);
  CHECK(any_proj);
  CHECK(any_pred);
}

TEST_CASE("end-to-end gradcheck of the auxiliary loss in double precision") {
  torch::manual_seed(17);
  auto cfg = tiny_mlr_config();
  PixelEncoder enc(tiny_encoder_config());
  enc->to(torch::kFloat64);
  MlrObjective obj(cfg, enc, nullptr, 2, false, torch::kFloat64);
  auto [obs, actions] = random_batch(2, 4, torch::kFloat64, 19);
  Rng mask_rng(5), aug_rng(6);
  auto draws = obj.sample_draws(obs, mask_rng, aug_rng);

  auto loss_value = [&] {
    torch::NoGradGuard no_grad;
    return obj.loss_with_draws(obs, actions, draws).first.item<double>();
  };

  auto [loss, report] = obj.loss_with_draws(obs, actions, draws);
  loss.backward();

  const double h = 1e-5;
  double max_rel = 0.0;
  torch::NoGradGuard no_grad;
  for (auto& p : obj.online_parameters()) {
    if (!p.grad().defined()) continue;
    auto flat = p.view(-1);
    auto grad = p.grad().view(-1);
    for (int64_t i = 0; i < flat.numel(); i += 7) {  // stride keeps runtime modest
      double orig = flat[i].item<double>();
      flat[i] = orig + h;
      double up = loss_value();
      flat[i] = orig - h;
      double down = loss_value();
      flat[i] = orig;
      double fd = (up - down) / (2 * h);
      double an = grad[i].item<double>();
      double denom = std::max({std::abs(an), std::abs(fd), 1e-4});
      max_rel = std::max(max_rel, std::abs(an - fd) / denom);
    }
  }
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("pixel-space reconstruction variant trains") {
  torch::manual_seed(23);
  auto cfg = tiny_mlr_config();
  cfg.target_space = TargetSpace::Pixel;
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  auto [obs, actions] = random_batch(2, 4, torch::kFloat32, 29);
  Rng mask_rng(1), aug_rng(2);
  auto [loss, report] = obj.compute_loss(obs, actions, mask_rng, aug_rng);
  CHECK(std::isfinite(report.loss));
  CHECK(report.loss > 0.0);
  loss.backward();
  CHECK(obj.grad_norm() > 0.0);
}

TEST_CASE("feature-space masking variant trains") {
  torch::manual_seed(25);
  auto cfg = tiny_mlr_config();
  cfg.mask_space = MaskSpace::Feature;
  cfg.mask.h = 1;
  cfg.mask.w = 1;
  cfg.mask.k = 2;
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  auto [obs, actions] = random_batch(2, 4, torch::kFloat32, 31);
  Rng mask_rng(1), aug_rng(2);
  auto [loss, report] = obj.compute_loss(obs, actions, mask_rng, aug_rng);
  CHECK(std::isfinite(report.loss));
  loss.backward();
  CHECK(obj.grad_norm() > 0.0);
}

TEST_CASE("momentum decoder variant keeps an EMA copy of the decoder") {
  torch::manual_seed(27);
  auto cfg = tiny_mlr_config();
  cfg.momentum_decoder = true;
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  auto [obs, actions] = random_batch(2, 4, torch::kFloat32, 37);
  Rng mask_rng(1), aug_rng(2);
  auto [loss, report] = obj.compute_loss(obs, actions, mask_rng, aug_rng);
  CHECK(std::isfinite(report.loss));

  // nudge online decoder, then check the EMA pulls the momentum copy
  {
    torch::NoGradGuard no_grad;
    for (auto& p : obj.decoder()->parameters()) p.add_(0.1);
  }
  obj.ema_step();
  auto [loss2, report2] = obj.compute_loss(obs, actions, mask_rng, aug_rng);
  CHECK(std::isfinite(report2.loss));
}

TEST_CASE("NaN parameters surface as NumericalError, not a crash") {
  torch::manual_seed(39);
  auto cfg = tiny_mlr_config();
  PixelEncoder enc(tiny_encoder_config());
  MlrObjective obj(cfg, enc, nullptr, 2, false);
  {
    torch::NoGradGuard no_grad;
    enc->parameters()[0].fill_(std::nan(""));
  }
  auto [obs, actions] = random_batch(1, 4, torch::kFloat32, 41);
  Rng mask_rng(1), aug_rng(2);
  CHECK_THROWS_AS(obj.compute_loss(obs, actions, mask_rng, aug_rng), NumericalError);
}

TEST_CASE("pretraining: zero steps is a no-op, 150 steps reduce the loss") {
  EnvSpec spec;
  spec.render_h = spec.render_w = 18;
  spec.frame_stack = 1;
  spec.action_repeat = 1;
  spec.max_episode_frames = 64;

  auto fill_buffer = [&](ReplayBuffer& buffer, uint64_t seed) {
    auto env = make_wrapped_env("catch", spec);
    Rng act_rng(seed);
    auto obs = env->reset(seed);
    for (int i = 0; i < 400; ++i) {
      Action a(act_rng.uniform_int(0, 2));
      auto step = env->step(a);
      buffer.push({obs, a, step.reward, step.obs, step.done});
      obs = step.done ? env->reset(act_rng.engine()()) : step.obs;
    }
  };

  EncoderConfig enc_cfg;
  enc_cfg.variant = EncoderVariant::Continuous;
  enc_cfg.in_channels = 1;
  enc_cfg.in_h = enc_cfg.in_w = 18;
  enc_cfg.latent_dim = 16;
  enc_cfg.conv_channels = 8;

  MLRConfig cfg = tiny_mlr_config();
  cfg.mask.k = 2;
  cfg.mask.h = 6;
  cfg.mask.w = 6;
  cfg.aug.crop.out_h = cfg.aug.crop.out_w = 18;
  cfg.aux_batch = 8;

  SUBCASE("steps=0 leaves the encoder unchanged") {
    torch::manual_seed(43);
    PixelEncoder enc(enc_cfg);
    MlrObjective obj(cfg, enc, nullptr, 3, true);
    auto before = snapshot_parameters(*enc);
    ReplayBuffer buffer(512, 1);
    fill_buffer(buffer, 1);
    Rng m(1), a(2), s(3);
    pretrain_only(obj, buffer, 0, 1e-3, m, a, s);
    CHECK(bit_identical(before, *enc));
  }

  SUBCASE("loss decreases and a fixed seed reproduces it") {
    double final_losses[2];
    for (int rep = 0; rep < 2; ++rep) {
      double first_loss = 0, last_loss = 0;
      double deltas = 0;
      int64_t n_seeds = 3;
      for (uint64_t seed = 0; seed < static_cast<uint64_t>(n_seeds); ++seed) {
        torch::manual_seed(100 + seed);
        PixelEncoder enc(enc_cfg);
        MlrObjective obj(cfg, enc, nullptr, 3, true);
        ReplayBuffer buffer(512, 1);
        fill_buffer(buffer, seed);
        Rng m(seed + 1), a(seed + 2), s(seed + 3);
        pretrain_only(obj, buffer, 150, 1e-3, m, a, s,
                      [&](int64_t step, const MLRLossReport& r) {
                        if (step == 1) first_loss = r.loss;
                        if (step == 150) last_loss = r.loss;
                      });
        deltas += first_loss - last_loss;
        if (seed == 0) final_losses[rep] = last_loss;
      }
      CHECK(deltas / static_cast<double>(n_seeds) > 0.0);
    }
    CHECK(final_losses[0] == final_losses[1]);
  }
}

TEST_CASE("regression accuracy is exactly 1 when nothing is masked") {
  torch::manual_seed(51);
  EnvSpec spec;
  spec.render_h = spec.render_w = 18;
  spec.frame_stack = 1;
  spec.action_repeat = 1;
  spec.max_episode_frames = 64;
  auto env = make_wrapped_env("catch", spec);

  EncoderConfig enc_cfg;
  enc_cfg.variant = EncoderVariant::Continuous;
  enc_cfg.in_channels = 1;
  enc_cfg.in_h = enc_cfg.in_w = 18;
  enc_cfg.latent_dim = 16;
  enc_cfg.conv_channels = 8;
  PixelEncoder enc(enc_cfg);

  MLRConfig cfg = tiny_mlr_config();
  cfg.mask.eta = 0.0;
  cfg.mask.k = 2;
  cfg.mask.h = 6;
  cfg.mask.w = 6;

  ReplayBuffer buffer(256, 1);
  Rng act_rng(7);
  auto obs = env->reset(7);
  for (int i = 0; i < 200; ++i) {
    Action a(act_rng.uniform_int(0, 2));
    auto step = env->step(a);
    buffer.push({obs, a, step.reward, step.obs, step.done});
    obs = step.done ? env->reset(act_rng.engine()()) : step.obs;
  }
  Rng mask_rng(1), sample_rng(2);
  double sim = encoder_regression_accuracy(enc, cfg, buffer, 64, mask_rng, sample_rng);
  CHECK(sim == doctest::Approx(1.0).epsilon(1e-6));
}
