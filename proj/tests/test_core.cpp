#include "test_common.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mlr/replay_buffer.hpp"

using namespace mlr;

namespace {

Observation tiny_obs(uint8_t fill) {
  Observation o(1, 2, 2);
  auto& buf = const_cast<std::vector<uint8_t>&>(o.raw());
  std::fill(buf.begin(), buf.end(), fill);
  return o;
}

Transition make_transition(uint8_t tag, bool done = false, float reward = 0.f) {
  Transition t;
  t.obs = tiny_obs(tag);
  t.action = Action(std::vector<float>{0.f});
  t.reward = reward;
  t.next_obs = tiny_obs(tag + 1);
  t.done = done;
  return t;
}

}  // namespace

TEST_CASE("push grows size and evicts FIFO") {
  ReplayBuffer buf(3);
  buf.push(make_transition(0));
  CHECK(buf.size() == 1);
  for (uint8_t i = 1; i < 4; ++i) buf.push(make_transition(i));
  CHECK(buf.size() == 3);
  CHECK(buf.oldest_index() == 1);
  CHECK(buf.get(1).obs.at(0, 0, 0) == 1);  // oldest evicted
}

TEST_CASE("new items get the max stored priority") {
  ReplayBuffer buf(8, 1, /*prioritized=*/true);
  buf.push(make_transition(0));
  buf.push(make_transition(1));
  buf.update_priority(0, 2.5f);
  buf.update_priority(1, 0.7f);
  buf.push(make_transition(2));
  // brute-force max over stored priorities
  float max_p = 0.f;
  for (int64_t i = buf.oldest_index(); i < buf.next_index() - 1; ++i)
    max_p = std::max(max_p, buf.priority(i));
  CHECK(buf.priority(2) == doctest::Approx(max_p));
  CHECK(buf.priority(2) == doctest::Approx(2.5f));
}

TEST_CASE("max priority tracks eviction of the max holder") {
  ReplayBuffer buf(2, 1, true);
  buf.push(make_transition(0));
  buf.push(make_transition(1));
  buf.update_priority(0, 9.f);
  buf.update_priority(1, 2.f);
  buf.push(make_transition(2));  // evicts index 0, the max holder
  CHECK(buf.priority(2) == doctest::Approx(2.f));
}

TEST_CASE("uniform sampling frequencies are equal within 3 sigma") {
  ReplayBuffer buf(4, 1);
  for (uint8_t i = 0; i < 4; ++i) buf.push(make_transition(i));
  Rng rng(7);
  const int64_t draws = 100000;
  std::vector<int64_t> counts(4, 0);
  for (auto idx : buf.sample_indices(draws, rng)) ++counts[static_cast<size_t>(idx)];
  double p = 0.25;
  double sigma = std::sqrt(draws * p * (1 - p));
  for (auto c : counts) CHECK(std::abs(c - draws * p) < 3 * sigma);
}

TEST_CASE("single positive priority is always sampled") {
  ReplayBuffer buf(4, 1, true);
  for (uint8_t i = 0; i < 4; ++i) buf.push(make_transition(i));
  buf.update_priority(0, 0.f);
  buf.update_priority(1, 3.0f);
  buf.update_priority(2, 0.f);
  buf.update_priority(3, 0.f);
  Rng rng(3);
  auto batch = buf.sample_prioritized(200, rng);
  for (auto idx : batch.indices) CHECK(idx == 1);
  for (auto w : batch.weights) CHECK(w == doctest::Approx(1.f));
}

TEST_CASE("priorities [1,4] with exponent 0.5 sample at ratio 1:2") {
  ReplayBuffer buf(2, 1, true, 0.5);
  buf.push(make_transition(0));
  buf.push(make_transition(1));
  buf.update_priority(0, 1.f);
  buf.update_priority(1, 4.f);
  Rng rng(11);
  const int64_t draws = 100000;
  int64_t second = 0;
  auto batch = buf.sample_prioritized(draws, rng);
  for (auto idx : batch.indices) second += idx == 1;
  // hand-check oracle: p = sqrt(4) / (sqrt(1) + sqrt(4)) = 2/3
  double p = 2.0 / 3.0;
  double sigma = std::sqrt(draws * p * (1 - p));
  CHECK(std::abs(second - draws * p) < 3 * sigma);
}

TEST_CASE("importance weights normalized to max 1") {
  ReplayBuffer buf(8, 1, true, 0.5);
  for (uint8_t i = 0; i < 8; ++i) buf.push(make_transition(i));
  for (int64_t i = 0; i < 8; ++i) buf.update_priority(i, static_cast<float>(i + 1));
  buf.set_priority_beta(0.7);
  Rng rng(5);
  auto batch = buf.sample_prioritized(64, rng);
  for (auto w : batch.weights) {
    CHECK(w <= 1.f + 1e-6f);
    CHECK(w > 0.f);
  }
}

TEST_CASE("trajectory windows: single episode of 20, K=16") {
  ReplayBuffer buf(32, 1);
  for (uint8_t i = 0; i < 20; ++i) buf.push(make_transition(i, i == 19));
  auto starts = buf.valid_trajectory_starts(16);
  std::vector<int64_t> expected = {0, 1, 2, 3, 4};
  CHECK(starts == expected);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    auto traj = buf.sample_trajectory(16, rng);
    CHECK(traj.length() == 16);
    CHECK(traj.start_index >= 0);
    CHECK(traj.start_index <= 4);
  }
}

TEST_CASE("episode boundary at step 10 leaves no 16-window in 20 steps") {
  ReplayBuffer buf(32, 1);
  for (uint8_t i = 0; i < 20; ++i) buf.push(make_transition(i, i == 10));
  CHECK(buf.valid_trajectory_starts(16).empty());
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample_trajectory(16, rng), InsufficientData);
}

TEST_CASE("sampler support matches brute-force window scan") {
  ReplayBuffer buf(128, 1);
  for (int i = 0; i < 100; ++i) buf.push(make_transition(static_cast<uint8_t>(i), i == 30 || i == 70));
  const int64_t K = 16;

  // brute-force enumeration of valid windows
  std::set<int64_t> expected;
  for (int64_t s = 0; s + K <= 100; ++s) {
    bool ok = true;
    for (int64_t j = s; j < s + K - 1; ++j)
      if (buf.get(j).done) ok = false;
    if (ok) expected.insert(s);
  }

  auto starts = buf.valid_trajectory_starts(K);
  CHECK(std::set<int64_t>(starts.begin(), starts.end()) == expected);

  Rng rng(9);
  std::set<int64_t> observed;
  for (int i = 0; i < 10000; ++i) observed.insert(buf.sample_trajectory(K, rng).start_index);
  CHECK(observed == expected);
}

TEST_CASE("trajectory contiguity: obs i+1 is stored next_obs of step i") {
  ReplayBuffer buf(64, 1);
  for (uint8_t i = 0; i < 30; ++i) buf.push(make_transition(i));
  Rng rng(2);
  auto traj = buf.sample_trajectory(8, rng);
  for (int64_t i = 0; i + 1 < traj.length(); ++i) {
    const auto& next_of_i = buf.get(traj.start_index + i).next_obs;
    CHECK(traj.observations[static_cast<size_t>(i + 1)].raw() == next_of_i.raw());
  }
}

TEST_CASE("fixed seed reproduces sample sequences") {
  ReplayBuffer buf(64, 1);
  for (uint8_t i = 0; i < 40; ++i) buf.push(make_transition(i));
  Rng a(42), b(42);
  CHECK(buf.sample_indices(32, a) == buf.sample_indices(32, b));
}

TEST_CASE("sampling below minimum size raises InsufficientData") {
  ReplayBuffer buf(64, /*min_size=*/10);
  for (uint8_t i = 0; i < 5; ++i) buf.push(make_transition(i));
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample_batch(2, rng), InsufficientData);
}

TEST_CASE("buffer save/load round trip") {
  ReplayBuffer buf(8, 2, true);
  for (uint8_t i = 0; i < 6; ++i) buf.push(make_transition(i, i == 3, 0.5f * i));
  buf.update_priority(2, 7.f);
  std::stringstream ss;
  buf.save(ss);

  ReplayBuffer loaded(1);
  loaded.load(ss);
  CHECK(loaded.size() == buf.size());
  CHECK(loaded.capacity() == buf.capacity());
  CHECK(loaded.min_size() == buf.min_size());
  for (int64_t i = loaded.oldest_index(); i < loaded.next_index(); ++i) {
    CHECK(loaded.get(i).obs.raw() == buf.get(i).obs.raw());
    CHECK(loaded.get(i).reward == buf.get(i).reward);
    CHECK(loaded.get(i).done == buf.get(i).done);
    CHECK(loaded.priority(i) == buf.priority(i));
  }
}
