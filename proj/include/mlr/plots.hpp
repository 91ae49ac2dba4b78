#pragma once

#include <string>
#include <vector>

#include "mlr/metric_log.hpp"

namespace mlr {

// Figure files are written as self-contained SVG.

// Training curve across seeds: mean line plus a +/- one-std band. Each
// input log contributes one seed; points are matched on the step axis.
void emit_training_curve(const std::vector<std::vector<MetricRecord>>& seed_logs,
                         const std::string& split, const std::string& name,
                         const std::string& title, const std::string& out_path);

// Performance profile: fraction of runs above tau, non-increasing in tau.
void emit_profile_curve(const std::vector<double>& taus, const std::vector<double>& fractions,
                        const std::string& title, const std::string& out_path);

}  // namespace mlr
