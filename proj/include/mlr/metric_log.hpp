#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mlr/errors.hpp"

namespace mlr {

struct MetricRecord {
  int64_t step = 0;
  std::string split;
  std::string name;
  double value = 0.0;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
};

// Append-only line records, one self-describing record per line:
//   step=120 split=train name=mlr_loss value=0.5 seed=3 config=a1b2c3
// Values use maximum precision so identical runs produce identical bytes.
class MetricLog {
 public:
  MetricLog() = default;
  MetricLog(const std::string& path, uint64_t seed, uint64_t config_hash)
      : seed_(seed), config_hash_(config_hash) {
    out_.open(path, std::ios::app);
    if (!out_) throw FileNotFound("cannot open metric log: " + path);
  }

  void append(int64_t step, const std::string& split, const std::string& name, double value) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "step=%lld split=%s name=%s value=%.17g seed=%llu config=%016llx",
                  static_cast<long long>(step), split.c_str(), name.c_str(), value,
                  static_cast<unsigned long long>(seed_),
                  static_cast<unsigned long long>(config_hash_));
    out_ << buf << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
  uint64_t seed_ = 0;
  uint64_t config_hash_ = 0;
};

std::vector<MetricRecord> read_metric_log(const std::string& path);

// Last record matching (split, name), if any.
inline const MetricRecord* find_last(const std::vector<MetricRecord>& records,
                                     const std::string& split, const std::string& name) {
  const MetricRecord* found = nullptr;
  for (const auto& r : records)
    if (r.split == split && r.name == name) found = &r;
  return found;
}

}  // namespace mlr
