#include "mlr/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mlr/rng.hpp"

namespace mlr {

namespace {

enum class KeyType { Int, Real, Bool, Str, IntList };

struct KeyInfo {
  KeyType type;
  ExperimentConfig::Value continuous;
  ExperimentConfig::Value discrete;
};

using V = ExperimentConfig::Value;

// Defaults follow the published hyperparameter tables for the continuous
// and discrete benchmarks.
const std::map<std::string, KeyInfo>& registry() {
  static const std::map<std::string, KeyInfo> reg = {
      {"env.id", {KeyType::Str, V{std::string("pendulum")}, V{std::string("catch")}}},
      {"env.render_size", {KeyType::Int, V{int64_t{100}}, V{int64_t{84}}}},
      {"env.action_repeat", {KeyType::Int, V{int64_t{4}}, V{int64_t{4}}}},
      {"env.frame_stack", {KeyType::Int, V{int64_t{3}}, V{int64_t{4}}}},
      {"env.max_episode_frames", {KeyType::Int, V{int64_t{1000}}, V{int64_t{108000}}}},

      {"agent.type", {KeyType::Str, V{std::string("sac")}, V{std::string("rainbow")}}},
      {"agent.gamma", {KeyType::Real, V{0.99}, V{0.99}}},
      {"agent.init_temperature", {KeyType::Real, V{0.1}, V{0.1}}},
      {"agent.actor_lr", {KeyType::Real, V{1e-3}, V{1e-3}}},
      {"agent.critic_lr", {KeyType::Real, V{1e-3}, V{1e-3}}},
      {"agent.alpha_lr", {KeyType::Real, V{1e-4}, V{1e-4}}},
      {"agent.alpha_beta1", {KeyType::Real, V{0.5}, V{0.5}}},
      {"agent.critic_ema", {KeyType::Real, V{0.99}, V{0.99}}},
      {"agent.target_update_freq", {KeyType::Int, V{int64_t{2}}, V{int64_t{1}}}},
      {"agent.twin_critics", {KeyType::Bool, V{true}, V{true}}},
      {"agent.hidden", {KeyType::Int, V{int64_t{1024}}, V{int64_t{256}}}},
      {"agent.batch", {KeyType::Int, V{int64_t{512}}, V{int64_t{32}}}},
      {"agent.log_std_min", {KeyType::Real, V{-10.0}, V{-10.0}}},
      {"agent.log_std_max", {KeyType::Real, V{2.0}, V{2.0}}},
      {"agent.lr", {KeyType::Real, V{1e-4}, V{1e-4}}},
      {"agent.adam_eps", {KeyType::Real, V{1.5e-4}, V{1.5e-4}}},
      {"agent.max_grad_norm", {KeyType::Real, V{10.0}, V{10.0}}},
      {"agent.atoms", {KeyType::Int, V{int64_t{51}}, V{int64_t{51}}}},
      {"agent.v_min", {KeyType::Real, V{-10.0}, V{-10.0}}},
      {"agent.v_max", {KeyType::Real, V{10.0}, V{10.0}}},
      {"agent.multi_step", {KeyType::Int, V{int64_t{10}}, V{int64_t{10}}}},
      {"agent.double_q", {KeyType::Bool, V{true}, V{true}}},
      {"agent.dueling", {KeyType::Bool, V{true}, V{true}}},
      {"agent.noisy_sigma", {KeyType::Real, V{0.5}, V{0.5}}},
      {"agent.clip_rewards", {KeyType::Bool, V{false}, V{true}}},
      {"agent.updates_per_step", {KeyType::Int, V{int64_t{1}}, V{int64_t{2}}}},

      {"replay.capacity", {KeyType::Int, V{int64_t{100000}}, V{int64_t{100000}}}},
      {"replay.min_size", {KeyType::Int, V{int64_t{1000}}, V{int64_t{2000}}}},
      {"replay.prioritized", {KeyType::Bool, V{false}, V{true}}},
      {"replay.priority_exponent", {KeyType::Real, V{0.5}, V{0.5}}},
      {"replay.priority_beta0", {KeyType::Real, V{0.4}, V{0.4}}},

      {"encoder.variant",
       {KeyType::Str, V{std::string("continuous")}, V{std::string("discrete")}}},
      {"encoder.latent_dim", {KeyType::Int, V{int64_t{50}}, V{int64_t{256}}}},
      {"encoder.conv_channels", {KeyType::Int, V{int64_t{32}}, V{int64_t{32}}}},
      {"net.input_size", {KeyType::Int, V{int64_t{84}}, V{int64_t{84}}}},

      {"heads.projection", {KeyType::Bool, V{true}, V{true}}},
      {"heads.prediction", {KeyType::Bool, V{true}, V{true}}},
      {"heads.hidden", {KeyType::Int, V{int64_t{100}}, V{int64_t{512}}}},
      {"heads.proj_dim", {KeyType::Int, V{int64_t{50}}, V{int64_t{256}}}},

      {"mask.ratio", {KeyType::Real, V{0.5}, V{0.5}}},
      {"mask.cube",
       {KeyType::IntList, V{std::vector<int64_t>{8, 10, 10}}, V{std::vector<int64_t>{8, 12, 12}}}},
      {"mask.strategy", {KeyType::Str, V{std::string("cube")}, V{std::string("cube")}}},
      {"mask.space", {KeyType::Str, V{std::string("pixel")}, V{std::string("pixel")}}},
      {"mask.fill", {KeyType::Real, V{0.0}, V{0.0}}},

      {"mlr.lambda", {KeyType::Real, V{1.0}, V{1.0}}},
      {"mlr.K", {KeyType::Int, V{int64_t{16}}, V{int64_t{16}}}},
      {"mlr.target_space", {KeyType::Str, V{std::string("latent")}, V{std::string("latent")}}},
      {"mlr.loss_metric", {KeyType::Str, V{std::string("cosine")}, V{std::string("cosine")}}},
      {"mlr.use_action_tokens", {KeyType::Bool, V{true}, V{true}}},
      {"mlr.momentum_decoder", {KeyType::Bool, V{false}, V{false}}},
      {"mlr.warmup_steps", {KeyType::Int, V{int64_t{6000}}, V{int64_t{0}}}},
      {"mlr.aux_batch", {KeyType::Int, V{int64_t{128}}, V{int64_t{32}}}},
      {"mlr.aux_lr", {KeyType::Real, V{5e-4}, V{1e-4}}},
      {"mlr.ema_m", {KeyType::Real, V{0.95}, V{0.0}}},

      {"decoder.layers", {KeyType::Int, V{int64_t{2}}, V{int64_t{2}}}},
      {"decoder.heads", {KeyType::Int, V{int64_t{1}}, V{int64_t{1}}}},
      {"decoder.mlp_ratio", {KeyType::Real, V{2.0}, V{2.0}}},
      {"decoder.pos_embeddings", {KeyType::Bool, V{true}, V{true}}},

      {"aug.intensity_scale", {KeyType::Real, V{0.05}, V{0.05}}},
      {"aug.intensity_clip", {KeyType::Real, V{2.0}, V{2.0}}},
      {"aug.crop_margin", {KeyType::Int, V{int64_t{0}}, V{int64_t{4}}}},

      {"run.env_steps", {KeyType::Int, V{int64_t{100000}}, V{int64_t{400000}}}},
      {"run.init_steps", {KeyType::Int, V{int64_t{1000}}, V{int64_t{2000}}}},
      {"run.update_every", {KeyType::Int, V{int64_t{1}}, V{int64_t{1}}}},
      {"run.eval_every", {KeyType::Int, V{int64_t{10000}}, V{int64_t{40000}}}},
      {"run.eval_episodes", {KeyType::Int, V{int64_t{10}}, V{int64_t{100}}}},
      {"run.checkpoint_every", {KeyType::Int, V{int64_t{0}}, V{int64_t{0}}}},
      {"run.log_every", {KeyType::Int, V{int64_t{1000}}, V{int64_t{1000}}}},
      {"run.seed", {KeyType::Int, V{int64_t{1}}, V{int64_t{1}}}},
      {"run.out_dir", {KeyType::Str, V{std::string("runs/exp")}, V{std::string("runs/exp")}}},
      {"run.threads", {KeyType::Int, V{int64_t{1}}, V{int64_t{1}}}},
  };
  return reg;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string format_value(const V& v) {
  char buf[64];
  if (std::holds_alternative<int64_t>(v)) {
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(std::get<int64_t>(v)));
    return buf;
  }
  if (std::holds_alternative<double>(v)) {
    std::snprintf(buf, sizeof(buf), "%.17g", std::get<double>(v));
    return buf;
  }
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v) ? "true" : "false";
  if (std::holds_alternative<std::string>(v)) return std::get<std::string>(v);
  std::string out;
  for (auto x : std::get<std::vector<int64_t>>(v)) {
    if (!out.empty()) out += ",";
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(x));
    out += buf;
  }
  return out;
}

V parse_value(const std::string& key, KeyType type, const std::string& raw) {
  std::string s = trim(raw);
  try {
    switch (type) {
      case KeyType::Int: {
        size_t pos = 0;
        int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw TypeMismatch("not an integer");
        return V{v};
      }
      case KeyType::Real: {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw TypeMismatch("not a real");
        return V{v};
      }
      case KeyType::Bool: {
        if (s == "true" || s == "1") return V{true};
        if (s == "false" || s == "0") return V{false};
        throw TypeMismatch("not a bool");
      }
      case KeyType::Str:
        return V{s};
      case KeyType::IntList: {
        std::vector<int64_t> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(std::stoll(trim(cell)));
        if (out.empty()) throw TypeMismatch("empty list");
        return V{out};
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
  }
  throw TypeMismatch("cannot parse value '" + s + "' for key " + key);
}

}  // namespace

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  if (name != "continuous" && name != "discrete")
    throw UnknownKey("unknown preset: " + name);
  ExperimentConfig cfg;
  cfg.preset_name_ = name;
  for (const auto& [key, info] : registry())
    cfg.values_[key] = (name == "continuous") ? info.continuous : info.discrete;
  return cfg;
}

void ExperimentConfig::set_from_string(const std::string& key, const std::string& value) {
  auto it = registry().find(key);
  if (it == registry().end()) throw UnknownKey("unknown config key: " + key);
  values_[key] = parse_value(key, it->second.type, value);
}

ExperimentConfig ExperimentConfig::load(const std::optional<std::string>& path,
                                        const std::vector<std::string>& overrides,
                                        const std::string& default_preset) {
  // The preset may be chosen by the file or an override; find it first.
  std::string preset_name = default_preset;
  std::vector<std::pair<std::string, std::string>> assignments;

  auto parse_line = [&](const std::string& line) {
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') return;
    auto eq = s.find('=');
    if (eq == std::string::npos) throw TypeMismatch("expected key=value, got: " + s);
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key == "preset")
      preset_name = value;
    else
      assignments.emplace_back(key, value);
  };

  if (path) {
    std::ifstream in(*path);
    if (!in) throw FileNotFound("config file not found: " + *path);
    std::string line;
    while (std::getline(in, line)) parse_line(line);
  }
  for (const auto& o : overrides) parse_line(o);

  auto cfg = preset(preset_name);
  for (const auto& [key, value] : assignments) cfg.set_from_string(key, value);
  return cfg;
}

int64_t ExperimentConfig::get_int(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnknownKey("unknown config key: " + key);
  if (!std::holds_alternative<int64_t>(it->second)) throw TypeMismatch(key + " is not int");
  return std::get<int64_t>(it->second);
}

double ExperimentConfig::get_real(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnknownKey("unknown config key: " + key);
  if (std::holds_alternative<int64_t>(it->second))
    return static_cast<double>(std::get<int64_t>(it->second));
  if (!std::holds_alternative<double>(it->second)) throw TypeMismatch(key + " is not real");
  return std::get<double>(it->second);
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnknownKey("unknown config key: " + key);
  if (!std::holds_alternative<bool>(it->second)) throw TypeMismatch(key + " is not bool");
  return std::get<bool>(it->second);
}

const std::string& ExperimentConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnknownKey("unknown config key: " + key);
  if (!std::holds_alternative<std::string>(it->second))
    throw TypeMismatch(key + " is not string");
  return std::get<std::string>(it->second);
}

const std::vector<int64_t>& ExperimentConfig::get_int_list(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UnknownKey("unknown config key: " + key);
  if (!std::holds_alternative<std::vector<int64_t>>(it->second))
    throw TypeMismatch(key + " is not an int list");
  return std::get<std::vector<int64_t>>(it->second);
}

std::string ExperimentConfig::serialize() const {
  std::string out = "preset = " + preset_name_ + "\n";
  for (const auto& [key, value] : values_) out += key + " = " + format_value(value) + "\n";
  return out;
}

uint64_t ExperimentConfig::hash() const {
  std::string ident = "preset = " + preset_name_ + "\n";
  for (const auto& [key, value] : values_)
    if (key != "run.out_dir") ident += key + " = " + format_value(value) + "\n";
  return Rng::fnv1a(ident);
}

}  // namespace mlr
