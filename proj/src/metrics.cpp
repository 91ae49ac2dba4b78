#include "mlr/metrics.hpp"

#include <fstream>
#include <sstream>

namespace mlr {

namespace {
double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

EvalReport aggregate_report(const ScoreMatrix& m, const std::vector<double>& taus) {
  EvalReport report;
  report.hns = hns_matrix(m);
  for (int64_t t = 0; t < m.num_tasks(); ++t) {
    std::vector<double> col;
    for (const auto& run : m.scores) col.push_back(run[static_cast<size_t>(t)]);
    double mean = 0;
    for (double x : col) mean += x;
    report.per_task_mean.push_back(mean / static_cast<double>(col.size()));
    report.per_task_median.push_back(median_of(col));
  }
  auto flat = flatten(report.hns);
  report.iqm = iqm(flat);
  report.og = optimality_gap(flat);
  report.profile_taus = taus;
  report.profile = performance_profile(report.hns, taus);
  return report;
}

ScoreMatrix read_score_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open score matrix: " + path);
  ScoreMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("empty score matrix file");
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) m.tasks.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != m.tasks.size())
      throw InvalidArgument("score row width does not match header");
    m.scores.push_back(std::move(values));
  }
  return m;
}

void write_score_matrix(const ScoreMatrix& m, const std::string& path) {
  std::ofstream out(path);
  for (size_t t = 0; t < m.tasks.size(); ++t) out << (t ? "," : "") << m.tasks[t];
  out << "\n";
  char buf[32];
  for (const auto& run : m.scores) {
    for (size_t t = 0; t < run.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", run[t]);
      out << (t ? "," : "") << buf;
    }
    out << "\n";
  }
}

}  // namespace mlr
