#pragma once

#include <string>
#include <vector>

#include "mlr/config.hpp"

namespace mlr {

// One axis of an ablation grid: a config key and the values to sweep.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

struct AblationCell {
  std::vector<std::pair<std::string, std::string>> assignment;
  std::vector<double> returns;  // final eval return per seed
  double mean = 0.0;
  double std = 0.0;
  int64_t decoder_params = -1;  // filled when the cell touches decoder.layers
  bool failed = false;
  std::string error;
};

struct AblationTable {
  std::vector<std::string> keys;
  std::vector<AblationCell> cells;

  std::string format() const;
  void write_csv(const std::string& path) const;
};

// Runs the cross-product of the grid axes over the given seeds, aggregating
// final evaluation returns per cell. Failed cells are marked, not fatal.
AblationTable run_ablation(const ExperimentConfig& base, const std::vector<GridAxis>& grid,
                           const std::vector<int64_t>& seeds, const std::string& out_dir);

// Analytic parameter count of one attention layer at width d with the
// default head layout (bias-free QKV, biased output projection, 2x MLP).
int64_t decoder_layer_parameter_count(int64_t width, double mlp_ratio);

}  // namespace mlr
