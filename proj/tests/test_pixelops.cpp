#include "test_common.hpp"

#include <cmath>
#include <set>

#include "mlr/augment.hpp"
#include "mlr/masking.hpp"

using namespace mlr;

namespace {
CubeMaskSpec default_cube() {
  CubeMaskSpec spec;
  spec.k = 8;
  spec.h = 10;
  spec.w = 10;
  spec.eta = 0.5;
  return spec;
}
}  // namespace

TEST_CASE("eta=0 masks nothing, eta=1 masks everything") {
  Rng rng(1);
  auto spec = default_cube();
  spec.eta = 0.0;
  auto plan = sample_mask(spec, 16, 84, 84, rng);
  CHECK(plan.masked_cells() == 0);
  CHECK(plan.pixel_mask().any().item<bool>() == false);

  spec.eta = 1.0;
  plan = sample_mask(spec, 16, 84, 84, rng);
  CHECK(plan.masked_cells() == plan.gk * plan.gh * plan.gw);
  CHECK(plan.pixel_mask().all().item<bool>() == true);
}

TEST_CASE("16x84x84 with cube 8x10x10 gives a [2,9,9] grid and 81 of 162 cells") {
  Rng rng(3);
  auto spec = default_cube();
  for (int draw = 0; draw < 200; ++draw) {
    auto plan = sample_mask(spec, 16, 84, 84, rng);
    CHECK(plan.gk == 2);
    CHECK(plan.gh == 9);
    CHECK(plan.gw == 9);
    CHECK(plan.masked_cells() == 81);
  }
}

TEST_CASE("mask count is exact for every strategy") {
  Rng rng(5);
  auto spec = default_cube();
  spec.eta = 0.3;

  SUBCASE("cube") {
    auto plan = sample_mask(spec, 16, 84, 84, rng);
    CHECK(plan.masked_cells() == std::llround(0.3 * 162));
  }
  SUBCASE("temporal segments of length k") {
    spec.strategy = MaskStrategy::Temporal;
    spec.eta = 0.5;
    auto plan = sample_mask(spec, 16, 84, 84, rng);
    CHECK(plan.gk == 2);
    CHECK(plan.gh == 1);
    CHECK(plan.masked_cells() == 1);
    // a temporal cell covers whole frames
    auto mask = plan.pixel_mask();
    for (int64_t t = 0; t < 16; ++t) {
      auto frame = mask[t];
      bool any = frame.any().item<bool>();
      bool all = frame.all().item<bool>();
      CHECK(any == all);
    }
  }
  SUBCASE("spatial masks per frame with exact per-frame counts") {
    spec.strategy = MaskStrategy::Spatial;
    spec.eta = 0.4;
    auto plan = sample_mask(spec, 16, 84, 84, rng);
    CHECK(plan.gk == 16);
    int64_t per_frame = std::llround(0.4 * 81);
    for (int64_t t = 0; t < plan.gk; ++t) {
      int64_t count = 0;
      for (int64_t y = 0; y < plan.gh; ++y)
        for (int64_t x = 0; x < plan.gw; ++x) count += plan.cell(t, y, x);
      CHECK(count == per_frame);
    }
  }
}

TEST_CASE("spatial grids at different timesteps are independent") {
  auto spec = default_cube();
  spec.strategy = MaskStrategy::Spatial;
  spec.eta = 0.5;
  Rng rng(17);
  // Frames agreeing on a fixed cell should occur at roughly the product
  // rate; a cube draw with k=8 would lock the first 8 frames together.
  int64_t agree = 0, draws = 4000;
  for (int64_t i = 0; i < draws; ++i) {
    auto plan = sample_mask(spec, 16, 84, 84, rng);
    agree += (plan.cell(0, 0, 0) == plan.cell(1, 0, 0));
  }
  // independent fair-ish coin agreement rate ~ 0.5 (41/81 masked)
  double rate = static_cast<double>(agree) / static_cast<double>(draws);
  CHECK(rate > 0.40);
  CHECK(rate < 0.60);
}

TEST_CASE("cube grids are constant within each temporal segment") {
  auto spec = default_cube();
  Rng rng(23);
  auto plan = sample_mask(spec, 16, 84, 84, rng);
  auto mask = plan.pixel_mask();
  for (int64_t t = 1; t < 8; ++t) {
    CHECK(torch::equal(mask[t], mask[0]));
    CHECK(torch::equal(mask[8 + t], mask[8]));
  }
}

TEST_CASE("apply_mask: identity, constant fill, single-cell extent") {
  Rng rng(7);
  auto spec = default_cube();
  auto seq = torch::rand({16, 3, 84, 84}) * 0.8 + 0.1;

  MaskPlan none;
  none.K = 16;
  none.H = 84;
  none.W = 84;
  none.gk = 2;
  none.gh = 9;
  none.gw = 9;
  none.ck = 8;
  none.ch = 10;
  none.cw = 10;
  none.grid.assign(162, 0);
  CHECK(torch::equal(apply_mask(seq, none, spec), seq));

  MaskPlan all = none;
  all.grid.assign(162, 1);
  auto filled = apply_mask(seq, all, spec);
  CHECK(torch::equal(filled, torch::zeros_like(seq)));

  MaskPlan one = none;
  one.grid[0] = 1;  // cell (0,0,0)
  auto masked = apply_mask(seq, one, spec);
  auto changed = (masked != seq).any(1);  // [K, H, W], any channel differs
  CHECK(changed.sum().item<int64_t>() == 8 * 10 * 10);
  // bit-exact outside the mask
  auto outside = seq.masked_select(one.pixel_mask().unsqueeze(1).logical_not());
  auto outside_masked = masked.masked_select(one.pixel_mask().unsqueeze(1).logical_not());
  CHECK(torch::equal(outside, outside_masked));
  // input not mutated
  CHECK((seq != masked).any().item<bool>());
}

TEST_CASE("apply_mask rejects mismatched extents") {
  Rng rng(1);
  auto spec = default_cube();
  auto plan = sample_mask(spec, 16, 84, 84, rng);
  auto seq = torch::rand({16, 3, 64, 64});
  CHECK_THROWS_AS(apply_mask(seq, plan, spec), ShapeMismatch);
}

TEST_CASE("cube exceeding extents is rejected") {
  Rng rng(1);
  CubeMaskSpec spec;
  spec.k = 20;
  spec.h = 10;
  spec.w = 10;
  CHECK_THROWS_AS(sample_mask(spec, 16, 84, 84, rng), InvalidSpec);
}

TEST_CASE("crop with margin 0 and matching size is a no-op") {
  Rng rng(1);
  CropSpec spec{0, 84, 84};
  auto seq = torch::rand({4, 3, 84, 84});
  CHECK(torch::equal(random_crop(seq, spec, rng), seq));
}

TEST_CASE("100 to 84 crop covers all 17x17 offsets") {
  Rng rng(19);
  CropSpec spec{0, 84, 84};
  auto seq = torch::rand({1, 1, 100, 100});
  std::set<std::pair<int64_t, int64_t>> seen;
  for (int i = 0; i < 10000; ++i) {
    auto d = sample_crop(seq, spec, rng);
    CHECK(d.dy >= 0);
    CHECK(d.dy <= 16);
    CHECK(d.dx >= 0);
    CHECK(d.dx <= 16);
    seen.insert({d.dy, d.dx});
  }
  CHECK(seen.size() == 17 * 17);
  CHECK(random_crop(seq, spec, rng).size(-1) == 84);
}

TEST_CASE("fixed seed gives identical crop offsets") {
  CropSpec spec{4, 84, 84};
  auto seq = torch::rand({2, 3, 84, 84});
  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) {
    auto da = sample_crop(seq, spec, a);
    auto db = sample_crop(seq, spec, b);
    CHECK(da.dy == db.dy);
    CHECK(da.dx == db.dx);
  }
}

TEST_CASE("intensity: scale 0 identity, clip bounds, Monte-Carlo moments") {
  auto seq = torch::rand({4, 3, 16, 16}) * 0.5;
  Rng rng(3);
  IntensitySpec zero{0.0, 2.0};
  CHECK(torch::equal(random_intensity(seq, zero, rng), seq));

  IntensitySpec spec{0.05, 2.0};
  double sum = 0, sum_sq = 0;
  const int64_t draws = 100000;
  for (int64_t i = 0; i < draws; ++i) {
    double m = sample_intensity(spec, rng);
    CHECK(m >= 1.0 - 2.0 * 0.05);
    CHECK(m <= 1.0 + 2.0 * 0.05);
    sum += m;
    sum_sq += m * m;
  }
  double mean = sum / draws;
  double std = std::sqrt(sum_sq / draws - mean * mean);
  CHECK(std::abs(mean - 1.0) < 0.001);
  // clipped standard normal at +-2: E[X^2] = (Phi(2)-Phi(-2)) - 4*phi(2) + 4*P(|Z|>2)
  //                                        = 0.738536 + 0.182000 = 0.920536
  CHECK(std == doctest::Approx(0.05 * std::sqrt(0.920536)).epsilon(0.02));
}

TEST_CASE("augmentation is constant across timesteps within a view") {
  AugmentSpec spec;
  spec.crop = {4, 32, 32};
  spec.intensity = {0.05, 2.0};
  auto seq = torch::ones({6, 3, 32, 32}) * 0.5;
  Rng rng(11);
  auto out = augment_sequence(seq, spec, rng);
  // constant input + shared multiplier => all frames stay identical
  for (int64_t t = 1; t < 6; ++t) CHECK(torch::equal(out[t], out[0]));
}
