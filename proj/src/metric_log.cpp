#include "mlr/metric_log.hpp"

#include <sstream>

namespace mlr {

std::vector<MetricRecord> read_metric_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open metric log: " + path);
  std::vector<MetricRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricRecord r;
    std::stringstream ss(line);
    std::string field;
    while (ss >> field) {
      auto eq = field.find('=');
      if (eq == std::string::npos) continue;
      std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      if (key == "step")
        r.step = std::stoll(value);
      else if (key == "split")
        r.split = value;
      else if (key == "name")
        r.name = value;
      else if (key == "value")
        r.value = std::stod(value);
      else if (key == "seed")
        r.seed = std::stoull(value);
      else if (key == "config")
        r.config_hash = std::stoull(value, nullptr, 16);
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace mlr
