#include "test_common.hpp"

#include <cmath>

#include "mlr/latent_decoder.hpp"
#include "mlr/momentum.hpp"

using namespace mlr;

namespace {

DecoderConfig tiny_config(int64_t width = 8, int64_t layers = 1) {
  DecoderConfig cfg;
  cfg.layers = layers;
  cfg.width = width;
  cfg.heads = 1;
  cfg.mlp_ratio = 2.0;
  cfg.max_pos = 8;
  cfg.action_dim = 2;
  return cfg;
}

void zero_all_parameters(torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  for (auto& p : m.parameters()) p.zero_();
}

}  // namespace

TEST_CASE("positional table matches the closed form, row 0 alternates 0/1") {
  PositionalEmbedding pos(16, 50, torch::kFloat64);
  auto acc = pos.table().accessor<double, 2>();
  for (int64_t p = 0; p < 16; ++p)
    for (int64_t dim = 0; dim < 50; ++dim) {
      int64_t two_j = dim - (dim % 2);
      double angle = p / std::pow(10000.0, static_cast<double>(two_j) / 50.0);
      double expected = (dim % 2 == 0) ? std::sin(angle) : std::cos(angle);
      CHECK(acc[p][dim] == doctest::Approx(expected).epsilon(1e-15));
      CHECK(acc[p][dim] >= -1.0);
      CHECK(acc[p][dim] <= 1.0);
    }
  for (int64_t dim = 0; dim < 50; ++dim)
    CHECK(acc[0][dim] == ((dim % 2 == 0) ? 0.0 : 1.0));
}

TEST_CASE("positional row at pos 0 width 4 is [0,1,0,1]") {
  PositionalEmbedding pos(4, 4, torch::kFloat64);
  auto row = pos.rows(1).squeeze(0);
  CHECK(row[0].item<double>() == 0.0);
  CHECK(row[1].item<double>() == 1.0);
  CHECK(row[2].item<double>() == 0.0);
  CHECK(row[3].item<double>() == 1.0);
}

TEST_CASE("token counts: K=1 gives 2 tokens with actions, 1 without") {
  auto cfg = tiny_config();
  LatentDecoder dec(cfg);
  auto states = torch::randn({1, 1, 8});
  auto actions = torch::randn({1, 1, 2});
  CHECK(dec->build_tokens(states, actions).size(1) == 2);

  cfg.use_action_tokens = false;
  LatentDecoder dec2(cfg);
  CHECK(dec2->build_tokens(states, actions).size(1) == 1);
}

TEST_CASE("zero states and zero-embedded actions leave pure positional rows") {
  auto cfg = tiny_config();
  LatentDecoder dec(cfg);
  zero_all_parameters(*dec);  // action embedding becomes 0
  auto states = torch::zeros({1, 4, 8});
  auto actions = torch::zeros({1, 4, 2});
  auto tokens = dec->build_tokens(states, actions);
  auto rows = dec->positional().rows(4);
  for (int64_t k = 0; k < 4; ++k) {
    CHECK(torch::allclose(tokens[0][2 * k], rows[k]));
    CHECK(torch::allclose(tokens[0][2 * k + 1], rows[k]));  // shared row
  }
}

TEST_CASE("state/action tokens of one timestep share a bitwise-identical row") {
  auto cfg = tiny_config();
  LatentDecoder dec(cfg);
  auto states = torch::zeros({1, 4, 8});
  auto actions = torch::zeros({1, 4, 2});
  zero_all_parameters(*dec);
  auto tokens = dec->build_tokens(states, actions);
  for (int64_t k = 0; k < 4; ++k)
    CHECK(torch::equal(tokens[0][2 * k], tokens[0][2 * k + 1]));
}

TEST_CASE("decode returns K outputs regardless of action tokens") {
  auto states = torch::randn({2, 4, 8});
  auto actions = torch::randn({2, 4, 2});
  for (bool use_actions : {true, false}) {
    auto cfg = tiny_config();
    cfg.use_action_tokens = use_actions;
    LatentDecoder dec(cfg);
    auto out = dec->forward(states, actions);
    CHECK(out.size(0) == 2);
    CHECK(out.size(1) == 4);
    CHECK(out.size(2) == 8);
  }
}

TEST_CASE("zeroed attention and MLP weights reduce to the residual identity") {
  auto cfg = tiny_config();
  cfg.use_pos_embeddings = false;
  LatentDecoder dec(cfg);
  zero_all_parameters(*dec);
  auto states = torch::randn({1, 4, 8});
  auto actions = torch::randn({1, 4, 2});
  auto out = dec->forward(states, actions);
  CHECK(torch::allclose(out, states, 1e-12, 1e-12));
}

TEST_CASE("global message passing: every input token reaches the output") {
  auto cfg = tiny_config(8, 2);
  torch::manual_seed(33);
  LatentDecoder dec(cfg, torch::kFloat64);
  auto states = torch::randn({1, 4, 8}, torch::kFloat64);
  auto actions = torch::randn({1, 4, 2}, torch::kFloat64);

  auto mean_out = [&](const torch::Tensor& s, const torch::Tensor& a) {
    torch::NoGradGuard no_grad;
    return dec->forward(s, a).mean().item<double>();
  };

  double base = mean_out(states, actions);
  const double h = 1e-6;
  for (int64_t k = 0; k < 4; ++k) {
    auto bumped_s = states.clone();
    bumped_s[0][k] += h;
    CHECK(std::abs(mean_out(bumped_s, actions) - base) / h > 1e-6);
    auto bumped_a = actions.clone();
    bumped_a[0][k] += h;
    CHECK(std::abs(mean_out(states, bumped_a) - base) / h > 1e-6);
  }
}

TEST_CASE("without positional embeddings or action tokens, decode is permutation-equivariant") {
  auto cfg = tiny_config(8, 2);
  cfg.use_pos_embeddings = false;
  cfg.use_action_tokens = false;
  torch::manual_seed(5);
  LatentDecoder dec(cfg);
  auto states = torch::randn({1, 6, 8});
  auto actions = torch::zeros({1, 6, 2});
  auto out = dec->forward(states, actions);

  auto perm = torch::tensor({3L, 1L, 5L, 0L, 2L, 4L});
  auto out_perm = dec->forward(states.index_select(1, perm), actions);
  CHECK(torch::allclose(out.index_select(1, perm), out_perm, 1e-5, 1e-6));
}

TEST_CASE("gradcheck: zero-weight config is exact, default config under 1e-4") {
  SUBCASE("linear-only degenerate configuration") {
    auto cfg = tiny_config(4, 1);
    LatentDecoder dec(cfg, torch::kFloat64);
    zero_all_parameters(*dec);
    auto states = torch::randn({1, 2, 4}, torch::kFloat64);
    auto actions = torch::randn({1, 2, 2}, torch::kFloat64);
    CHECK(gradcheck_decoder(dec, states, actions) <= 1e-9);
  }
  SUBCASE("default two-layer config, K=4, width 16") {
    DecoderConfig cfg;
    cfg.layers = 2;
    cfg.width = 16;
    cfg.heads = 1;
    cfg.mlp_ratio = 2.0;
    cfg.max_pos = 4;
    cfg.action_dim = 3;
    torch::manual_seed(11);
    LatentDecoder dec(cfg, torch::kFloat64);
    auto states = torch::randn({1, 4, 16}, torch::kFloat64);
    auto actions = torch::randn({1, 4, 3}, torch::kFloat64);
    double err = gradcheck_decoder(dec, states, actions, 1e-5);
    CHECK(err <= 1e-4);

    // determinism of the check itself
    for (auto& p : dec->parameters()) p.mutable_grad() = torch::Tensor();
    CHECK(gradcheck_decoder(dec, states, actions, 1e-5) == err);
  }
}

TEST_CASE("attention stack parameter counts match the analytic layout") {
  for (int64_t layers : {1, 2, 4, 8}) {
    DecoderConfig cfg;
    cfg.layers = layers;
    cfg.width = 50;
    cfg.heads = 1;
    cfg.mlp_ratio = 2.0;
    cfg.max_pos = 16;
    cfg.action_dim = 6;
    LatentDecoder dec(cfg);
    CHECK(dec->attention_parameter_count() == layers * 20400);
  }
}
