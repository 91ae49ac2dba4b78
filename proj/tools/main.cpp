#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mlr/ablate.hpp"
#include "mlr/evaluate.hpp"
#include "mlr/experiment.hpp"
#include "mlr/metrics.hpp"
#include "mlr/plots.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string preset = "continuous";
  int64_t seed = -1;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "config file of key=value lines");
  cmd->add_option("--set", opts.sets, "override, key=value (repeatable)");
  cmd->add_option("--preset", opts.preset, "base preset: continuous or discrete");
  cmd->add_option("--seed", opts.seed, "master seed");
  cmd->add_option("--out", opts.out, "output directory");
}

mlr::ExperimentConfig resolve(const CommonOpts& opts) {
  std::optional<std::string> path;
  if (!opts.config_path.empty()) path = opts.config_path;
  auto cfg = mlr::ExperimentConfig::load(path, opts.sets, opts.preset);
  if (opts.seed >= 0) cfg.set_from_string("run.seed", std::to_string(opts.seed));
  if (!opts.out.empty()) cfg.set_from_string("run.out_dir", opts.out);
  return cfg;
}

std::vector<int64_t> parse_seed_list(const std::string& s) {
  std::vector<int64_t> seeds;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) seeds.push_back(std::stoll(cell));
  if (seeds.empty()) throw mlr::InvalidArgument("empty seed list");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked-latent-reconstruction RL experiment runner"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_opts, ablate_opts, pretrain_opts;
  std::string resume_dir, checkpoint_dir;
  int64_t eval_episodes = 10;
  std::vector<std::string> grid_specs;
  std::string seeds_csv = "1";
  int64_t collect_steps = 2000, pretrain_steps = 1000;

  auto* train = app.add_subcommand("train", "run the interaction + learning loop");
  add_common(train, train_opts);
  train->add_option("--resume", resume_dir, "checkpoint directory to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("--episodes", eval_episodes, "evaluation episodes");

  auto* ablate = app.add_subcommand("ablate", "run a config grid");
  add_common(ablate, ablate_opts);
  ablate
      ->add_option("--grid", grid_specs,
                   "axis as key=v1;v2;v3 (repeatable, cross-product)")
      ->required();
  ablate->add_option("--seeds", seeds_csv, "comma-separated seed list");

  auto* plot = app.add_subcommand("plot", "emit figures from logs");
  std::vector<std::string> log_paths;
  std::string plot_split = "eval", plot_name = "return_mean", plot_out = "curve.svg";
  std::string profile_scores, profile_out;
  plot->add_option("--logs", log_paths, "metric logs, one per seed");
  plot->add_option("--split", plot_split, "record split to plot");
  plot->add_option("--name", plot_name, "record name to plot");
  plot->add_option("--out", plot_out, "output SVG path");
  plot->add_option("--profile-scores", profile_scores,
                   "CSV of normalized scores; emits a performance profile");
  plot->add_option("--profile-out", profile_out, "profile SVG path");

  auto* pretrain = app.add_subcommand("pretrain", "auxiliary-objective-only training");
  add_common(pretrain, pretrain_opts);
  pretrain->add_option("--collect", collect_steps, "random-policy transitions to collect");
  pretrain->add_option("--steps", pretrain_steps, "optimizer updates");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      auto cfg = resolve(train_opts);
      mlr::Trainer trainer(cfg);
      if (!resume_dir.empty()) trainer.load_checkpoint(resume_dir);
      auto ckpt = trainer.run();
      std::printf("final checkpoint: %s\n", ckpt.c_str());
      std::printf("metrics: %s\n", trainer.log_path().c_str());
    } else if (eval->parsed()) {
      auto cfg = resolve(eval_opts);
      mlr::Trainer trainer(cfg);
      trainer.load_checkpoint(checkpoint_dir);
      auto policy = trainer.eval_policy();
      auto result = mlr::evaluate_policy(policy, trainer.env(), eval_episodes,
                                         trainer.rngs().eval_env);
      std::printf("episodes %lld  mean %.3f  std %.3f\n",
                  static_cast<long long>(eval_episodes), result.mean, result.std);
    } else if (ablate->parsed()) {
      auto cfg = resolve(ablate_opts);
      std::vector<mlr::GridAxis> grid;
      for (const auto& spec : grid_specs) {
        auto eq = spec.find('=');
        if (eq == std::string::npos)
          throw mlr::InvalidArgument("grid axis must be key=v1;v2, got: " + spec);
        mlr::GridAxis axis;
        axis.key = spec.substr(0, eq);
        std::stringstream ss(spec.substr(eq + 1));
        std::string cell;
        while (std::getline(ss, cell, ';')) axis.values.push_back(cell);
        grid.push_back(std::move(axis));
      }
      auto out_dir = cfg.get_str("run.out_dir");
      auto table = mlr::run_ablation(cfg, grid, parse_seed_list(seeds_csv), out_dir);
      std::printf("%s", table.format().c_str());
      table.write_csv(out_dir + "/ablation.csv");
      std::printf("table: %s/ablation.csv\n", out_dir.c_str());
    } else if (plot->parsed()) {
      if (!profile_scores.empty()) {
        auto m = mlr::read_score_matrix(profile_scores);
        double max_v = 1.0;
        for (const auto& run : m.scores)
          for (double v : run) max_v = std::max(max_v, v);
        std::vector<double> taus;
        for (int i = 0; i <= 100; ++i) taus.push_back(max_v * i / 100.0);
        auto curve = mlr::performance_profile(m.scores, taus);
        mlr::emit_profile_curve(taus, curve, "performance profile",
                                profile_out.empty() ? "profile.svg" : profile_out);
        std::printf("wrote %s\n", profile_out.empty() ? "profile.svg" : profile_out.c_str());
      }
      if (!log_paths.empty()) {
        std::vector<std::vector<mlr::MetricRecord>> logs;
        for (const auto& p : log_paths) logs.push_back(mlr::read_metric_log(p));
        mlr::emit_training_curve(logs, plot_split, plot_name, plot_split + "/" + plot_name,
                                 plot_out);
        std::printf("wrote %s\n", plot_out.c_str());
      }
    } else if (pretrain->parsed()) {
      auto cfg = resolve(pretrain_opts);
      auto path = mlr::run_pretrain(cfg, collect_steps, pretrain_steps);
      std::printf("pretrained encoder: %s\n", path.c_str());
    }
  } catch (const mlr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime error: %s\n", e.what());
    return 3;
  }
  return 0;
}
