#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "mlr/errors.hpp"
#include "mlr/rng.hpp"
#include "mlr/types.hpp"

namespace mlr {

struct ActionSpace {
  bool discrete = false;
  int64_t dim = 1;  // continuous dimension or number of discrete actions
};

struct EnvSpec {
  std::string id;
  ActionSpace action_space;
  int64_t render_h = 84;
  int64_t render_w = 84;
  int64_t action_repeat = 4;
  int64_t frame_stack = 3;
  int64_t max_episode_frames = 1000;
  bool grayscale = false;
};

struct StepResult {
  Observation obs;
  float reward = 0.f;
  bool done = false;
};

// Raw environment: renders one frame per step. Deterministic given the
// reset seed and the action sequence.
class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Observation reset(std::optional<uint64_t> seed = std::nullopt) = 0;
  virtual StepResult step(const Action& a) = 0;
  // Physical state for bitwise-resumable checkpoints.
  virtual void save_state(std::ostream& os) const = 0;
  virtual void load_state(std::istream& is) = 0;
};

// Applies action repeat, frame stacking and pixel normalization, and counts
// raw environment frames (interaction steps x action repeat).
class WrappedEnv {
 public:
  WrappedEnv(std::unique_ptr<Env> env, const EnvSpec& spec);

  const EnvSpec& spec() const { return spec_; }
  int64_t frames() const { return frames_; }
  bool done() const { return done_; }

  Observation reset(std::optional<uint64_t> seed = std::nullopt);
  StepResult step(const Action& a);
  // Current stacked observation (the one step() produced last).
  Observation last_observation() const { return stacked(); }

  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  Observation stacked() const;
  void push_frame(const Observation& frame);

  std::unique_ptr<Env> env_;
  EnvSpec spec_;
  std::deque<Observation> stack_;
  int64_t frames_ = 0;
  int64_t episode_frames_ = 0;
  bool done_ = true;
};

// Toy continuous-control task: keep a pendulum rendered as a rod upright
// with a 1-D torque. Reward is 1 - normalized quadratic cost, in [0, 1].
class PixelPendulum : public Env {
 public:
  explicit PixelPendulum(const EnvSpec& spec);
  const EnvSpec& spec() const override { return spec_; }
  Observation reset(std::optional<uint64_t> seed) override;
  StepResult step(const Action& a) override;
  void save_state(std::ostream& os) const override;
  void load_state(std::istream& is) override;

  double angle() const { return theta_; }
  double velocity() const { return omega_; }
  // Mechanical energy of the free pendulum, for integrator diagnostics.
  double energy() const;
  void set_state(double theta, double omega);

 private:
  Observation render() const;

  EnvSpec spec_;
  Rng rng_;
  double theta_ = 0.0;
  double omega_ = 0.0;
  int64_t steps_ = 0;
  bool done_ = true;
};

// Toy discrete-control task: catch a falling block with a paddle. Actions
// left/stay/right; reward +1 on catch, -1 on miss, episode ends when the
// block reaches the bottom row.
class PixelCatch : public Env {
 public:
  explicit PixelCatch(const EnvSpec& spec);
  const EnvSpec& spec() const override { return spec_; }
  Observation reset(std::optional<uint64_t> seed) override;
  StepResult step(const Action& a) override;
  void save_state(std::ostream& os) const override;
  void load_state(std::istream& is) override;

  int64_t ball_row() const { return ball_row_; }
  int64_t ball_col() const { return ball_col_; }
  int64_t paddle_col() const { return paddle_col_; }
  static constexpr int64_t kGrid = 9;

 private:
  Observation render() const;

  EnvSpec spec_;
  Rng rng_;
  int64_t ball_row_ = 0, ball_col_ = 0, paddle_col_ = 0;
  bool done_ = true;
};

// Registry of raw environments by string id ("pendulum", "catch").
std::unique_ptr<Env> make_env(const std::string& id, const EnvSpec& spec);

// Fills in the action space and channel layout for a registered id.
EnvSpec resolve_env_spec(const std::string& id, EnvSpec spec);

inline std::unique_ptr<WrappedEnv> make_wrapped_env(const std::string& id, EnvSpec spec) {
  spec = resolve_env_spec(id, spec);
  return std::make_unique<WrappedEnv>(make_env(id, spec), spec);
}

}  // namespace mlr
