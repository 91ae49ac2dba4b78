#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "mlr/config.hpp"
#include "mlr/env.hpp"
#include "mlr/evaluate.hpp"
#include "mlr/metric_log.hpp"
#include "mlr/objective.hpp"
#include "mlr/rainbow.hpp"
#include "mlr/replay_buffer.hpp"
#include "mlr/rng.hpp"
#include "mlr/sac.hpp"

namespace mlr {

// One training run: environment interaction, joint RL + auxiliary updates,
// periodic evaluation, checkpointing and metric logging. Fully resumable
// from a checkpoint directory.
class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& cfg);

  // Runs until the raw environment-frame budget is reached. Returns the
  // final checkpoint directory.
  std::string run();

  // Runs the same loop up to a frame limit without the final evaluation or
  // checkpoint; lets callers interrupt and resume a run mid-way.
  void run_until(int64_t frame_limit);

  void save_checkpoint(const std::string& dir);
  void load_checkpoint(const std::string& dir);

  // Accessors used by tests and the evaluation command.
  WrappedEnv& env() { return *env_; }
  ReplayBuffer& buffer() { return *buffer_; }
  PixelEncoder encoder() { return encoder_; }
  MlrObjective* objective() { return objective_.get(); }
  SacAgent* sac() { return sac_.get(); }
  RainbowAgent* rainbow() { return rainbow_.get(); }
  RngSet& rngs() { return rngs_; }
  int64_t frames() const { return frames_; }
  const std::string& log_path() const { return log_path_; }

  Policy eval_policy();
  EvalResult evaluate_now();
  // Masked-vs-original representation similarity on buffered data.
  double regression_similarity(int64_t n);

  MLRConfig mlr_config() const { return mlr_cfg_; }
  AugmentSpec augment_spec() const { return aug_; }

  // One learner round (used by the smoke tests as well as run()).
  void update_once();

 private:
  void interact_once();
  void maybe_update();
  void maybe_eval(MetricLog& log);
  void log_train_metrics(MetricLog& log);
  Action random_action();
  Action train_action(const Observation& obs);

  ExperimentConfig cfg_;
  RngSet rngs_;
  AugmentSpec aug_;
  MLRConfig mlr_cfg_;
  bool discrete_ = false;
  int64_t action_dim_ = 1;

  std::unique_ptr<WrappedEnv> env_, eval_env_;
  std::unique_ptr<ReplayBuffer> buffer_;
  PixelEncoder encoder_{nullptr};
  std::unique_ptr<SacAgent> sac_;
  std::unique_ptr<RainbowAgent> rainbow_;
  std::unique_ptr<MlrObjective> objective_;
  std::unique_ptr<torch::optim::Adam> aux_opt_;

  Observation obs_;
  bool episode_active_ = false;
  double episode_return_ = 0.0;
  int64_t frames_ = 0;        // raw environment frames
  int64_t interactions_ = 0;  // wrapped steps
  int64_t updates_ = 0;
  int64_t aux_updates_ = 0;
  int64_t aux_skips_ = 0;
  int64_t next_eval_ = 0;
  int64_t next_log_ = 0;
  int64_t next_checkpoint_ = 0;

  // latest loss values for the periodic log rows
  double last_rl_loss_ = 0.0, last_mlr_loss_ = 0.0, last_total_loss_ = 0.0;
  double last_lr_aux_ = 0.0, last_grad_norm_ = 0.0;

  std::string out_dir_;
  std::string log_path_;
};

// Collects `n` random-policy transitions into the trainer's buffer, then
// optimizes the auxiliary objective alone and saves the encoder weights.
std::string run_pretrain(const ExperimentConfig& cfg, int64_t collect_steps,
                         int64_t pretrain_steps);

}  // namespace mlr
