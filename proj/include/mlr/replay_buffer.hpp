#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <vector>

#include "mlr/errors.hpp"
#include "mlr/rng.hpp"
#include "mlr/types.hpp"

namespace mlr {

struct PrioritizedBatch {
  std::vector<int64_t> indices;  // global indices, valid until eviction
  std::vector<float> weights;    // importance weights, normalized to max 1
};

// FIFO transition store addressed by global insertion index. Supports
// uniform and proportional-prioritized batch sampling plus contiguous
// K-step trajectory windows for the auxiliary objective.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int64_t capacity, int64_t min_size = 1, bool prioritized = false,
                        double priority_exponent = 0.5)
      : capacity_(capacity),
        min_size_(min_size),
        prioritized_(prioritized),
        priority_exponent_(priority_exponent) {
    if (capacity_ <= 0) throw InvalidArgument("replay capacity must be positive");
    storage_.reserve(static_cast<size_t>(capacity_));
  }

  int64_t size() const { return static_cast<int64_t>(storage_.size()); }
  int64_t capacity() const { return capacity_; }
  bool prioritized() const { return prioritized_; }
  // Global index of the oldest retained transition.
  int64_t oldest_index() const { return next_index_ - size(); }
  int64_t next_index() const { return next_index_; }

  void push(const Transition& t) {
    if (!std::isfinite(t.reward)) throw InvalidArgument("non-finite reward");
    if (size() == capacity_) {
      auto slot = static_cast<size_t>(next_index_ % capacity_);
      bool evicted_max = priorities_[slot] >= max_priority_;
      priorities_[slot] = 0.f;  // drop before computing the incoming priority
      if (evicted_max) recompute_max_priority();
      storage_[slot] = t;
      priorities_[slot] = prioritized_ ? max_priority_ : 1.f;
    } else {
      storage_.push_back(t);
      priorities_.push_back(prioritized_ ? max_priority_ : 1.f);
    }
    max_priority_ = std::max(max_priority_, priorities_[static_cast<size_t>(next_index_ % capacity_)]);
    ++next_index_;
  }

  const Transition& get(int64_t global_index) const {
    check_index(global_index);
    return storage_[static_cast<size_t>(global_index % capacity_)];
  }

  float priority(int64_t global_index) const {
    check_index(global_index);
    return priorities_[static_cast<size_t>(global_index % capacity_)];
  }

  void update_priority(int64_t global_index, float priority) {
    check_index(global_index);
    if (priority < 0.f) throw InvalidArgument("priorities must be non-negative");
    float p = priority;
    auto slot = static_cast<size_t>(global_index % capacity_);
    bool was_max = priorities_[slot] >= max_priority_;
    priorities_[slot] = p;
    if (p >= max_priority_)
      max_priority_ = p;
    else if (was_max)
      recompute_max_priority();
  }

  // Annealed importance-sampling exponent, 0.4 -> 1 over training.
  void set_priority_beta(double beta) { priority_beta_ = beta; }
  double priority_beta() const { return priority_beta_; }

  // Uniform sample of n global indices. `reserve_tail` excludes the newest
  // entries so a caller can walk an n-step window forward from each index.
  std::vector<int64_t> sample_indices(int64_t n, Rng& rng, int64_t reserve_tail = 0) const {
    int64_t hi = valid_high(reserve_tail);
    std::vector<int64_t> out(static_cast<size_t>(n));
    for (auto& idx : out) idx = rng.uniform_int(oldest_index(), hi);
    return out;
  }

  PrioritizedBatch sample_prioritized(int64_t n, Rng& rng, int64_t reserve_tail = 0) const {
    int64_t lo = oldest_index(), hi = valid_high(reserve_tail);
    int64_t m = hi - lo + 1;
    std::vector<double> cum(static_cast<size_t>(m));
    double total = 0;
    for (int64_t i = 0; i < m; ++i) {
      total += std::pow(static_cast<double>(priority(lo + i)), priority_exponent_);
      cum[static_cast<size_t>(i)] = total;
    }
    if (total <= 0) throw InsufficientData("no positive priorities");
    PrioritizedBatch batch;
    batch.indices.resize(static_cast<size_t>(n));
    batch.weights.resize(static_cast<size_t>(n));
    double max_w = 0;
    for (int64_t i = 0; i < n; ++i) {
      double u = rng.uniform() * total;
      auto it = std::lower_bound(cum.begin(), cum.end(), u);
      int64_t k = std::min<int64_t>(it - cum.begin(), m - 1);
      batch.indices[static_cast<size_t>(i)] = lo + k;
      double p = (std::pow(static_cast<double>(priority(lo + k)), priority_exponent_)) / total;
      double w = std::pow(static_cast<double>(m) * p, -priority_beta_);
      batch.weights[static_cast<size_t>(i)] = static_cast<float>(w);
      max_w = std::max(max_w, w);
    }
    for (auto& w : batch.weights) w = static_cast<float>(w / max_w);
    return batch;
  }

  // Single-transition batch sampling per the policy-learning path.
  std::vector<Transition> sample_batch(int64_t n, Rng& rng) const {
    require_min_size();
    std::vector<Transition> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t idx : sample_indices(n, rng)) out.push_back(get(idx));
    return out;
  }

  // Start indices of every retained window of K contiguous steps with no
  // done=true before the last step.
  std::vector<int64_t> valid_trajectory_starts(int64_t K) const {
    std::vector<int64_t> starts;
    if (size() < K) return starts;
    int64_t lo = oldest_index(), hi = next_index_ - K;
    int64_t run = 0;  // consecutive done=false steps ending at i-1
    for (int64_t i = lo; i < next_index_; ++i) {
      if (i - lo >= K - 1 && run >= K - 1 && i - K + 1 >= lo && i - K + 1 <= hi)
        starts.push_back(i - K + 1);
      run = get(i).done ? 0 : run + 1;
    }
    return starts;
  }

  Trajectory sample_trajectory(int64_t K, Rng& rng) const {
    auto starts = valid_trajectory_starts(K);
    if (starts.empty()) throw InsufficientData("no valid trajectory window of length K");
    int64_t s = starts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(starts.size()) - 1))];
    return extract_trajectory(s, K);
  }

  std::vector<Trajectory> sample_trajectories(int64_t n, int64_t K, Rng& rng) const {
    auto starts = valid_trajectory_starts(K);
    if (starts.empty()) throw InsufficientData("no valid trajectory window of length K");
    std::vector<Trajectory> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      int64_t s =
          starts[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(starts.size()) - 1))];
      out.push_back(extract_trajectory(s, K));
    }
    return out;
  }

  void require_min_size() const {
    if (size() < min_size_)
      throw InsufficientData("replay buffer below minimum size for sampling");
  }
  int64_t min_size() const { return min_size_; }

  // Versioned binary dump: transitions plus priorities. RNG state lives in
  // the run checkpoint, not here.
  void save(std::ostream& os) const {
    os.write(kMagic, 8);
    write_i64(os, capacity_);
    write_i64(os, min_size_);
    write_i64(os, next_index_);
    write_i64(os, size());
    os.write(reinterpret_cast<const char*>(&max_priority_), sizeof(max_priority_));
    uint8_t flags = prioritized_ ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&flags), 1);
    for (int64_t i = oldest_index(); i < next_index_; ++i) {
      const Transition& t = get(i);
      write_obs(os, t.obs);
      write_action(os, t.action);
      os.write(reinterpret_cast<const char*>(&t.reward), sizeof(t.reward));
      write_obs(os, t.next_obs);
      uint8_t d = t.done ? 1 : 0;
      os.write(reinterpret_cast<const char*>(&d), 1);
      float p = priority(i);
      os.write(reinterpret_cast<const char*>(&p), sizeof(p));
    }
  }

  void load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (std::string(magic, 8) != kMagic) throw Error("bad replay checkpoint header");
    capacity_ = read_i64(is);
    min_size_ = read_i64(is);
    int64_t next = read_i64(is);
    int64_t n = read_i64(is);
    is.read(reinterpret_cast<char*>(&max_priority_), sizeof(max_priority_));
    uint8_t flags = 0;
    is.read(reinterpret_cast<char*>(&flags), 1);
    prioritized_ = flags & 1;
    storage_.clear();
    priorities_.clear();
    next_index_ = next - n;
    for (int64_t i = 0; i < n; ++i) {
      Transition t;
      t.obs = read_obs(is);
      t.action = read_action(is);
      is.read(reinterpret_cast<char*>(&t.reward), sizeof(t.reward));
      t.next_obs = read_obs(is);
      uint8_t d = 0;
      is.read(reinterpret_cast<char*>(&d), 1);
      t.done = d != 0;
      float p = 0;
      is.read(reinterpret_cast<char*>(&p), sizeof(p));
      push(t);
      update_priority(next_index_ - 1, p);
    }
  }

 private:
  static constexpr const char* kMagic = "MLRBUF01";

  int64_t valid_high(int64_t reserve_tail) const {
    require_min_size();
    int64_t hi = next_index_ - 1 - reserve_tail;
    if (hi < oldest_index()) throw InsufficientData("reserve_tail leaves no sampleable index");
    return hi;
  }

  void check_index(int64_t global_index) const {
    if (global_index < oldest_index() || global_index >= next_index_)
      throw InvalidArgument("replay index evicted or out of range");
  }

  void recompute_max_priority() {
    max_priority_ = storage_.empty() ? 1.f : 0.f;
    for (float p : priorities_) max_priority_ = std::max(max_priority_, p);
    if (max_priority_ <= 0.f) max_priority_ = 1.f;
  }

  Trajectory extract_trajectory(int64_t start, int64_t K) const {
    Trajectory traj;
    traj.start_index = start;
    traj.observations.reserve(static_cast<size_t>(K));
    traj.actions.reserve(static_cast<size_t>(K));
    for (int64_t i = 0; i < K; ++i) {
      const Transition& t = get(start + i);
      traj.observations.push_back(t.obs);
      traj.actions.push_back(t.action);
    }
    return traj;
  }

  static void write_i64(std::ostream& os, int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static int64_t read_i64(std::istream& is) {
    int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static void write_obs(std::ostream& os, const Observation& o) {
    write_i64(os, o.channels());
    write_i64(os, o.height());
    write_i64(os, o.width());
    os.write(reinterpret_cast<const char*>(o.raw().data()),
             static_cast<std::streamsize>(o.raw().size()));
  }
  static Observation read_obs(std::istream& is) {
    int64_t d = read_i64(is), h = read_i64(is), w = read_i64(is);
    auto buf = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(d * h * w));
    is.read(reinterpret_cast<char*>(buf->data()), static_cast<std::streamsize>(buf->size()));
    return Observation(d, h, w, std::move(buf));
  }
  static void write_action(std::ostream& os, const Action& a) {
    uint8_t tag = a.is_discrete() ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&tag), 1);
    if (a.is_discrete()) {
      write_i64(os, a.discrete());
    } else {
      write_i64(os, static_cast<int64_t>(a.continuous().size()));
      os.write(reinterpret_cast<const char*>(a.continuous().data()),
               static_cast<std::streamsize>(a.continuous().size() * sizeof(float)));
    }
  }
  static Action read_action(std::istream& is) {
    uint8_t tag = 0;
    is.read(reinterpret_cast<char*>(&tag), 1);
    if (tag) return Action(read_i64(is));
    int64_t n = read_i64(is);
    std::vector<float> v(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
    return Action(std::move(v));
  }

  int64_t capacity_;
  int64_t min_size_;
  bool prioritized_;
  double priority_exponent_;
  double priority_beta_ = 0.4;
  float max_priority_ = 1.f;
  int64_t next_index_ = 0;
  std::vector<Transition> storage_;
  std::vector<float> priorities_;
};

}  // namespace mlr
