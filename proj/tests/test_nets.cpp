#include "test_common.hpp"

#include "mlr/encoders.hpp"
#include "mlr/heads.hpp"
#include "mlr/momentum.hpp"

using namespace mlr;

namespace {
EncoderConfig table_config() {
  EncoderConfig cfg;
  cfg.variant = EncoderVariant::Continuous;
  cfg.in_channels = 9;  // 3 stacked RGB frames
  cfg.in_h = cfg.in_w = 84;
  cfg.latent_dim = 50;
  return cfg;
}
}  // namespace

TEST_CASE("zero image encodes to a finite vector") {
  torch::manual_seed(0);
  PixelEncoder enc(table_config());
  auto out = enc->forward(torch::zeros({1, 9, 84, 84}));
  CHECK(out.isfinite().all().item<bool>());
}

TEST_CASE("encoding is deterministic given parameters and input") {
  torch::manual_seed(1);
  PixelEncoder enc(table_config());
  auto x = torch::rand({2, 9, 84, 84});
  CHECK(torch::equal(enc->forward(x), enc->forward(x)));
}

TEST_CASE("latent dimension is 50 under the continuous benchmark config") {
  torch::manual_seed(2);
  PixelEncoder enc(table_config());
  auto out = enc->forward(torch::rand({3, 9, 84, 84}));
  CHECK(out.size(1) == 50);
}

TEST_CASE("discrete encoder uses the 8/4/3 stack and projects to token width") {
  EncoderConfig cfg;
  cfg.variant = EncoderVariant::Discrete;
  cfg.in_channels = 4;
  cfg.in_h = cfg.in_w = 84;
  cfg.latent_dim = 256;
  torch::manual_seed(3);
  PixelEncoder enc(cfg);
  auto fs = enc->feature_shape();
  CHECK(fs[0] == 64);
  CHECK(fs[1] == 7);
  CHECK(fs[2] == 7);
  CHECK(enc->forward(torch::rand({1, 4, 84, 84})).size(1) == 256);
}

TEST_CASE("mismatched input shape raises ShapeMismatch") {
  torch::manual_seed(4);
  PixelEncoder enc(table_config());
  CHECK_THROWS_AS(enc->forward(torch::rand({1, 9, 64, 64})), ShapeMismatch);
  CHECK_THROWS_AS(enc->forward(torch::rand({1, 3, 84, 84})), ShapeMismatch);
}

TEST_CASE("bounded inputs yield bounded activations at default init") {
  torch::manual_seed(5);
  PixelEncoder enc(table_config());
  auto out = enc->forward(torch::rand({4, 9, 84, 84}));
  CHECK(out.abs().max().item<double>() < 1e4);
}

TEST_CASE("disabled heads are identity pass-throughs") {
  HeadConfig cfg;
  cfg.use_projection = false;
  cfg.use_prediction = false;
  cfg.input_dim = 50;
  ProjectionHead proj(cfg);
  PredictionHead pred(cfg);
  auto s = torch::rand({4, 50});
  CHECK(torch::equal(proj->forward(s), s));
  CHECK(torch::equal(pred->forward(s), s));
}

TEST_CASE("online and target branches differ exactly by the prediction head") {
  HeadConfig cfg;
  cfg.input_dim = 50;
  cfg.hidden = 32;
  cfg.proj_dim = 24;
  torch::manual_seed(6);
  ProjectionHead online(cfg), momentum(cfg);
  PredictionHead pred(cfg);
  hard_sync(*online, *momentum);

  auto s = torch::rand({4, 50});
  auto target_out = momentum->forward(s);          // g_bar(s)
  auto online_out = pred->forward(online->forward(s));  // q(g(s))
  CHECK(torch::allclose(online->forward(s), target_out));
  CHECK(torch::allclose(online_out, pred->forward(target_out)));
}

TEST_CASE("target branch carries no gradient path once detached") {
  HeadConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden = 8;
  cfg.proj_dim = 8;
  torch::manual_seed(7);
  ProjectionHead momentum(cfg);
  freeze(*momentum);
  torch::Tensor out;
  {
    torch::NoGradGuard no_grad;
    out = momentum->forward(torch::rand({2, 8})).detach();
  }
  CHECK_FALSE(out.requires_grad());
}

TEST_CASE("ema_update: fixed point, hard copy, scalar arithmetic") {
  HeadConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = 4;
  cfg.proj_dim = 4;
  torch::manual_seed(8);
  ProjectionHead online(cfg), momentum(cfg);

  SUBCASE("m = 1 leaves momentum unchanged") {
    auto before = snapshot_parameters(*momentum);
    ema_update(*online, *momentum, 1.0);
    CHECK(bit_identical(before, *momentum));
  }
  SUBCASE("m = 0 copies online exactly") {
    ema_update(*online, *momentum, 0.0);
    CHECK(bit_identical(snapshot_parameters(*online), *momentum));
  }
  SUBCASE("scalar oracle: 0.95*2 + 0.05*4 = 2.1") {
    torch::NoGradGuard no_grad;
    online->parameters()[0].fill_(4.0);
    momentum->parameters()[0].fill_(2.0);
    ema_update(*online, *momentum, 0.95);
    CHECK(momentum->parameters()[0].view(-1)[0].item<double>() ==
          doctest::Approx(2.1).epsilon(1e-12));
  }
}

TEST_CASE("ema matches the formula to 1e-12 relative in double precision") {
  HeadConfig cfg;
  cfg.input_dim = 16;
  cfg.hidden = 16;
  cfg.proj_dim = 16;
  torch::manual_seed(9);
  ProjectionHead online(cfg), momentum(cfg);
  online->to(torch::kFloat64);
  momentum->to(torch::kFloat64);

  auto online_before = snapshot_parameters(*online);
  auto momentum_before = snapshot_parameters(*momentum);
  const double m = 0.9371;
  ema_update(*online, *momentum, m);
  auto after = momentum->parameters();
  for (size_t i = 0; i < after.size(); ++i) {
    auto expected = m * momentum_before[i] + (1 - m) * online_before[i];
    auto rel = ((after[i] - expected).abs() / expected.abs().clamp_min(1e-3)).max();
    CHECK(rel.item<double>() <= 1e-12);
  }
}

TEST_CASE("ema with mismatched shapes raises ShapeMismatch") {
  HeadConfig a, b;
  a.input_dim = 4;
  a.hidden = 4;
  a.proj_dim = 4;
  b = a;
  b.hidden = 8;
  ProjectionHead online(a), momentum(b);
  CHECK_THROWS_AS(ema_update(*online, *momentum, 0.5), ShapeMismatch);
}

TEST_CASE("momentum params are bit-identical after optimizer steps without ema") {
  torch::manual_seed(10);
  EncoderConfig cfg;
  cfg.in_channels = 1;
  cfg.in_h = cfg.in_w = 16;
  cfg.latent_dim = 8;
  cfg.conv_channels = 8;
  PixelEncoder online(cfg), momentum(cfg);
  hard_sync(*online, *momentum);
  freeze(*momentum);
  auto before = snapshot_parameters(*momentum);

  torch::optim::Adam opt(online->parameters(), torch::optim::AdamOptions(1e-3));
  for (int step = 0; step < 100; ++step) {
    opt.zero_grad();
    auto loss = online->forward(torch::rand({2, 1, 16, 16})).pow(2).mean();
    loss.backward();
    opt.step();
  }
  CHECK(bit_identical(before, *momentum));
  CHECK_FALSE(bit_identical(snapshot_parameters(*online), *momentum));
}
