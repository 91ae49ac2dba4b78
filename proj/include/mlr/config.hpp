#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mlr/errors.hpp"

namespace mlr {

// Flat dotted-key configuration with typed values. Presets carry the
// benchmark defaults; files and --set overrides refine them. Unknown keys
// are rejected.
class ExperimentConfig {
 public:
  using Value = std::variant<int64_t, double, bool, std::string, std::vector<int64_t>>;

  static ExperimentConfig preset(const std::string& name);

  // Loads `preset`, then the optional file, then the overrides, each as
  // "key=value".
  static ExperimentConfig load(const std::optional<std::string>& path,
                               const std::vector<std::string>& overrides,
                               const std::string& default_preset = "continuous");

  int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_str(const std::string& key) const;
  const std::vector<int64_t>& get_int_list(const std::string& key) const;

  void set_from_string(const std::string& key, const std::string& value);

  // Canonical "key = value" lines, sorted by key; load(serialize()) is
  // key-for-key identical.
  std::string serialize() const;
  // Identity of the experiment: every key except the output location, so
  // logically identical runs in different directories share a hash.
  uint64_t hash() const;

  const std::map<std::string, Value>& values() const { return values_; }
  const std::string& preset_name() const { return preset_name_; }

 private:
  std::map<std::string, Value> values_;
  std::string preset_name_;
};

}  // namespace mlr
