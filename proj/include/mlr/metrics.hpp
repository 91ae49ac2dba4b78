#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mlr/errors.hpp"

namespace mlr {

// (runs x tasks) matrix of raw scores plus per-task human/random references.
struct ScoreMatrix {
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> scores;  // one row per run
  std::map<std::string, std::pair<double, double>> references;  // task -> (random, human)

  int64_t runs() const { return static_cast<int64_t>(scores.size()); }
  int64_t num_tasks() const { return static_cast<int64_t>(tasks.size()); }
};

// Human-normalized score (S_A - S_R) / (S_H - S_R).
inline double hns(double score, double random_ref, double human_ref) {
  if (human_ref == random_ref)
    throw DegenerateReference("human and random references coincide");
  return (score - random_ref) / (human_ref - random_ref);
}

// Interquartile mean with fractional-weight trimming: the middle 50% of the
// sorted values, boundary items weighted by their overlap with the retained
// interval.
inline double iqm(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("iqm of empty vector");
  std::sort(values.begin(), values.end());
  double n = static_cast<double>(values.size());
  double lo = n / 4.0, hi = n - n / 4.0;
  double total = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    double a = static_cast<double>(i), b = a + 1.0;
    double overlap = std::min(b, hi) - std::max(a, lo);
    if (overlap > 0) total += overlap * values[i];
  }
  return total / (n / 2.0);
}

// Mean shortfall below human-level normalized score 1.0. Scores are clamped
// into [0, 1] so the gap itself stays in [0, 1].
inline double optimality_gap(const std::vector<double>& hns_values, double threshold = 1.0) {
  if (hns_values.empty()) return 0.0;
  double total = 0.0;
  for (double x : hns_values) total += threshold - std::clamp(x, 0.0, threshold);
  return total / static_cast<double>(hns_values.size());
}

// F(tau) = (1/M) sum_m (1/N) sum_n 1[x_{m,n} > tau] for each tau.
inline std::vector<double> performance_profile(const std::vector<std::vector<double>>& matrix,
                                               const std::vector<double>& taus) {
  std::vector<double> curve;
  curve.reserve(taus.size());
  for (double tau : taus) {
    double m_total = 0.0;
    for (const auto& run : matrix) {
      double frac = 0.0;
      for (double x : run) frac += (x > tau) ? 1.0 : 0.0;
      m_total += run.empty() ? 0.0 : frac / static_cast<double>(run.size());
    }
    curve.push_back(matrix.empty() ? 0.0 : m_total / static_cast<double>(matrix.size()));
  }
  return curve;
}

// HNS matrix from raw scores and the per-task references.
inline std::vector<std::vector<double>> hns_matrix(const ScoreMatrix& m) {
  std::vector<std::vector<double>> out;
  out.reserve(static_cast<size_t>(m.runs()));
  for (const auto& run : m.scores) {
    std::vector<double> row;
    row.reserve(run.size());
    for (size_t t = 0; t < run.size(); ++t) {
      auto it = m.references.find(m.tasks[t]);
      if (it == m.references.end())
        throw InvalidArgument("missing reference scores for task " + m.tasks[t]);
      row.push_back(hns(run[t], it->second.first, it->second.second));
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline std::vector<double> flatten(const std::vector<std::vector<double>>& m) {
  std::vector<double> out;
  for (const auto& row : m) out.insert(out.end(), row.begin(), row.end());
  return out;
}

struct EvalReport {
  std::vector<double> per_task_mean;
  std::vector<double> per_task_median;
  std::vector<std::vector<double>> hns;
  double iqm = 0.0;
  double og = 0.0;
  std::vector<double> profile_taus;
  std::vector<double> profile;
};

EvalReport aggregate_report(const ScoreMatrix& m, const std::vector<double>& taus);

// Comma-separated score tables: header row of task ids, one row per run.
ScoreMatrix read_score_matrix(const std::string& path);
void write_score_matrix(const ScoreMatrix& m, const std::string& path);

}  // namespace mlr
