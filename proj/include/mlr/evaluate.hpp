#pragma once

#include <cmath>
#include <functional>

#include "mlr/env.hpp"
#include "mlr/types.hpp"

namespace mlr {

// Deterministic (evaluation-mode) policy interface shared by both agents
// and scripted test policies.
using Policy = std::function<Action(const Observation&)>;

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over episodes
  std::vector<double> returns;
};

inline EvalResult evaluate_policy(const Policy& policy, WrappedEnv& env, int64_t episodes,
                                  Rng& seed_rng) {
  EvalResult result;
  for (int64_t e = 0; e < episodes; ++e) {
    auto obs = env.reset(seed_rng.engine()());
    double ret = 0.0;
    while (true) {
      auto step = env.step(policy(obs));
      ret += step.reward;
      obs = step.obs;
      if (step.done) break;
    }
    result.returns.push_back(ret);
  }
  double n = static_cast<double>(result.returns.size());
  for (double r : result.returns) result.mean += r;
  result.mean /= n;
  double var = 0.0;
  for (double r : result.returns) var += (r - result.mean) * (r - result.mean);
  result.std = std::sqrt(var / n);
  return result;
}

}  // namespace mlr
