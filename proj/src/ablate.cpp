#include "mlr/ablate.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mlr/experiment.hpp"

namespace mlr {

int64_t decoder_layer_parameter_count(int64_t d, double mlp_ratio) {
  int64_t hidden = static_cast<int64_t>(d * mlp_ratio);
  int64_t attention = 3 * d * d + (d * d + d);           // qkv (no bias) + out projection
  int64_t mlp = (d * hidden + hidden) + (hidden * d + d);
  int64_t norms = 2 * (2 * d);
  return attention + mlp + norms;
}

std::string AblationTable::format() const {
  std::string out;
  char buf[256];
  for (const auto& cell : cells) {
    std::string label;
    for (const auto& [k, v] : cell.assignment) {
      if (!label.empty()) label += " ";
      label += k + "=" + v;
    }
    if (cell.failed) {
      std::snprintf(buf, sizeof(buf), "%-48s  FAILED (%s)\n", label.c_str(),
                    cell.error.c_str());
      out += buf;
      continue;
    }
    if (cell.decoder_params >= 0)
      std::snprintf(buf, sizeof(buf), "%-48s  %8.1f +- %6.1f  (n=%zu, decoder params %lld)\n",
                    label.c_str(), cell.mean, cell.std, cell.returns.size(),
                    static_cast<long long>(cell.decoder_params));
    else
      std::snprintf(buf, sizeof(buf), "%-48s  %8.1f +- %6.1f  (n=%zu)\n", label.c_str(),
                    cell.mean, cell.std, cell.returns.size());
    out += buf;
  }
  return out;
}

void AblationTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  for (const auto& k : keys) out << k << ",";
  out << "mean,std,n,decoder_params,failed\n";
  char buf[64];
  for (const auto& cell : cells) {
    for (const auto& [k, v] : cell.assignment) out << v << ",";
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%zu,", cell.mean, cell.std,
                  cell.returns.size());
    out << buf << cell.decoder_params << "," << (cell.failed ? 1 : 0) << "\n";
  }
}

namespace {

void cross_product(const std::vector<GridAxis>& grid, size_t axis,
                   std::vector<std::pair<std::string, std::string>>& current,
                   std::vector<std::vector<std::pair<std::string, std::string>>>& out) {
  if (axis == grid.size()) {
    out.push_back(current);
    return;
  }
  for (const auto& value : grid[axis].values) {
    current.emplace_back(grid[axis].key, value);
    cross_product(grid, axis + 1, current, out);
    current.pop_back();
  }
}

}  // namespace

AblationTable run_ablation(const ExperimentConfig& base, const std::vector<GridAxis>& grid,
                           const std::vector<int64_t>& seeds, const std::string& out_dir) {
  AblationTable table;
  for (const auto& axis : grid) table.keys.push_back(axis.key);

  std::vector<std::vector<std::pair<std::string, std::string>>> assignments;
  std::vector<std::pair<std::string, std::string>> current;
  cross_product(grid, 0, current, assignments);

  int64_t cell_id = 0;
  for (const auto& assignment : assignments) {
    AblationCell cell;
    cell.assignment = assignment;
    for (int64_t seed : seeds) {
      try {
        ExperimentConfig cfg = base;
        for (const auto& [k, v] : assignment) cfg.set_from_string(k, v);
        cfg.set_from_string("run.seed", std::to_string(seed));
        cfg.set_from_string("run.out_dir", out_dir + "/cell" + std::to_string(cell_id) +
                                               "_seed" + std::to_string(seed));
        Trainer trainer(cfg);
        trainer.run();
        auto records = read_metric_log(trainer.log_path());
        const auto* final_return = find_last(records, "final", "return_mean");
        if (!final_return) throw Error("run produced no final return record");
        cell.returns.push_back(final_return->value);
        if (cell.decoder_params < 0 && trainer.objective())
          cell.decoder_params = trainer.objective()->decoder()->attention_parameter_count();
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
    if (!cell.returns.empty()) {
      for (double r : cell.returns) cell.mean += r;
      cell.mean /= static_cast<double>(cell.returns.size());
      double var = 0;
      for (double r : cell.returns) var += (r - cell.mean) * (r - cell.mean);
      cell.std = std::sqrt(var / static_cast<double>(cell.returns.size()));
      cell.failed = false;  // partial seed failures keep the aggregated cell
    }
    table.cells.push_back(std::move(cell));
    ++cell_id;
  }
  return table;
}

}  // namespace mlr
