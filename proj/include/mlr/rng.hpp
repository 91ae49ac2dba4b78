#pragma once

#include <cstdint>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

namespace mlr {

// One master seed fans out to named sub-streams so that e.g. an ablation
// over mask ratios changes the mask stream and nothing else.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(uint64_t seed) : engine_(seed) {}
  Rng(uint64_t master, const std::string& stream_name)
      : engine_(mix(master, fnv1a(stream_name))) {}

  std::mt19937_64& engine() { return engine_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Inclusive bounds.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  void save(std::ostream& os) const {
    std::ostringstream ss;
    ss << engine_;
    std::string s = ss.str();
    uint64_t n = s.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(s.data(), static_cast<std::streamsize>(n));
  }
  void load(std::istream& is) {
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    std::istringstream ss(s);
    ss >> engine_;
  }

  static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  static uint64_t mix(uint64_t a, uint64_t b) {
    // splitmix64 finalizer over the combined words
    uint64_t z = a + 0x9e3779b97f4a7c15ull + b;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

// The named streams a training run uses. Kept in one place so checkpoints
// can serialize every source of randomness.
struct RngSet {
  Rng env, eval_env, mask, augment, sampler, noise, action;

  explicit RngSet(uint64_t master = 0)
      : env(master, "env"),
        eval_env(master, "eval_env"),
        mask(master, "mask"),
        augment(master, "augment"),
        sampler(master, "sampler"),
        noise(master, "noise"),
        action(master, "action") {}

  void save(std::ostream& os) const {
    env.save(os);
    eval_env.save(os);
    mask.save(os);
    augment.save(os);
    sampler.save(os);
    noise.save(os);
    action.save(os);
  }
  void load(std::istream& is) {
    env.load(is);
    eval_env.load(is);
    mask.load(is);
    augment.load(is);
    sampler.load(is);
    noise.load(is);
    action.load(is);
  }
};

}  // namespace mlr
