#include "mlr/env.hpp"

#include <algorithm>
#include <cmath>

namespace mlr {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Pendulum physics constants. Semi-implicit Euler keeps the free-swing
// energy drift small over long horizons.
constexpr double kGravity = 10.0;
constexpr double kMass = 1.0;
constexpr double kLength = 1.0;
constexpr double kDt = 0.02;
constexpr double kMaxTorque = 2.0;
constexpr double kMaxSpeed = 8.0;

double wrap_angle(double theta) {
  while (theta > kPi) theta -= 2 * kPi;
  while (theta < -kPi) theta += 2 * kPi;
  return theta;
}

void write_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void write_i64(std::ostream& os, int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
int64_t read_i64(std::istream& is) {
  int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// WrappedEnv

WrappedEnv::WrappedEnv(std::unique_ptr<Env> env, const EnvSpec& spec)
    : env_(std::move(env)), spec_(spec) {
  if (spec_.action_repeat < 1 || spec_.frame_stack < 1)
    throw InvalidSpec("action_repeat and frame_stack must be >= 1");
}

Observation WrappedEnv::reset(std::optional<uint64_t> seed) {
  auto frame = env_->reset(seed);
  stack_.clear();
  for (int64_t i = 0; i < spec_.frame_stack; ++i) stack_.push_back(frame);
  episode_frames_ = 0;
  done_ = false;
  return stacked();
}

StepResult WrappedEnv::step(const Action& a) {
  if (done_) throw SteppedDoneEnv("step() on a finished episode");
  float reward = 0.f;
  Observation frame;
  bool done = false;
  for (int64_t i = 0; i < spec_.action_repeat; ++i) {
    auto r = env_->step(a);
    reward += r.reward;
    frame = r.obs;
    ++frames_;
    ++episode_frames_;
    if (r.done) {
      done = true;
      break;
    }
    if (episode_frames_ >= spec_.max_episode_frames) {
      done = true;
      break;
    }
  }
  push_frame(frame);
  done_ = done;
  return {stacked(), reward, done};
}

Observation WrappedEnv::stacked() const {
  const auto& first = stack_.front();
  int64_t c = first.channels(), h = first.height(), w = first.width();
  auto buf = std::make_shared<std::vector<uint8_t>>();
  buf->reserve(static_cast<size_t>(c * h * w * spec_.frame_stack));
  for (const auto& f : stack_) buf->insert(buf->end(), f.raw().begin(), f.raw().end());
  return Observation(c * spec_.frame_stack, h, w, std::move(buf));
}

void WrappedEnv::push_frame(const Observation& frame) {
  stack_.push_back(frame);
  while (static_cast<int64_t>(stack_.size()) > spec_.frame_stack) stack_.pop_front();
}

void WrappedEnv::save_state(std::ostream& os) const {
  write_i64(os, frames_);
  write_i64(os, episode_frames_);
  write_i64(os, done_ ? 1 : 0);
  write_i64(os, static_cast<int64_t>(stack_.size()));
  for (const auto& f : stack_) {
    write_i64(os, f.channels());
    write_i64(os, f.height());
    write_i64(os, f.width());
    os.write(reinterpret_cast<const char*>(f.raw().data()),
             static_cast<std::streamsize>(f.raw().size()));
  }
  env_->save_state(os);
}

void WrappedEnv::load_state(std::istream& is) {
  frames_ = read_i64(is);
  episode_frames_ = read_i64(is);
  done_ = read_i64(is) != 0;
  int64_t n = read_i64(is);
  stack_.clear();
  for (int64_t i = 0; i < n; ++i) {
    int64_t c = read_i64(is), h = read_i64(is), w = read_i64(is);
    auto buf = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(c * h * w));
    is.read(reinterpret_cast<char*>(buf->data()), static_cast<std::streamsize>(buf->size()));
    stack_.push_back(Observation(c, h, w, std::move(buf)));
  }
  env_->load_state(is);
}

// ---------------------------------------------------------------------------
// PixelPendulum

PixelPendulum::PixelPendulum(const EnvSpec& spec) : spec_(spec) {}

Observation PixelPendulum::reset(std::optional<uint64_t> seed) {
  if (seed) rng_ = Rng(*seed);
  theta_ = rng_.uniform(-0.2, 0.2);  // near-upright start
  omega_ = rng_.uniform(-0.1, 0.1);
  steps_ = 0;
  done_ = false;
  return render();
}

StepResult PixelPendulum::step(const Action& a) {
  if (done_) throw SteppedDoneEnv("pendulum episode finished");
  double u = std::clamp(static_cast<double>(a.continuous().at(0)), -1.0, 1.0);
  double torque = u * kMaxTorque;

  // Semi-implicit Euler on the inverted pendulum (theta = 0 is upright).
  double accel = (kGravity / kLength) * std::sin(theta_) +
                 torque / (kMass * kLength * kLength);
  omega_ = std::clamp(omega_ + kDt * accel, -kMaxSpeed, kMaxSpeed);
  theta_ = wrap_angle(theta_ + kDt * omega_);
  ++steps_;

  double cost = theta_ * theta_ + 0.1 * omega_ * omega_ + 0.001 * torque * torque;
  double max_cost = kPi * kPi + 0.1 * kMaxSpeed * kMaxSpeed + 0.001 * kMaxTorque * kMaxTorque;
  float reward = static_cast<float>(1.0 - cost / max_cost);

  return {render(), reward, false};
}

double PixelPendulum::energy() const {
  // Kinetic plus potential, with the potential maximal at the upright pose.
  return 0.5 * kMass * kLength * kLength * omega_ * omega_ +
         kMass * kGravity * kLength * std::cos(theta_);
}

void PixelPendulum::set_state(double theta, double omega) {
  theta_ = theta;
  omega_ = omega;
  done_ = false;
  steps_ = 0;
}

Observation PixelPendulum::render() const {
  int64_t h = spec_.render_h, w = spec_.render_w;
  Observation obs(3, h, w);
  auto& buf = const_cast<std::vector<uint8_t>&>(obs.raw());

  auto put = [&](int64_t c, int64_t y, int64_t x, uint8_t v) {
    buf[static_cast<size_t>((c * h + y) * w + x)] = v;
  };

  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      put(0, y, x, 30);
      put(1, y, x, 30);
      put(2, y, x, 40);
    }

  double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  double rod = 0.38 * std::min(h, w);
  double tip_x = cx + rod * std::sin(theta_);
  double tip_y = cy - rod * std::cos(theta_);
  double thickness = std::max(1.5, 0.03 * std::min(h, w));
  double bob_r = std::max(2.5, 0.06 * std::min(h, w));

  auto dist_to_rod = [&](double px, double py) {
    double vx = tip_x - cx, vy = tip_y - cy;
    double len2 = vx * vx + vy * vy;
    double t = ((px - cx) * vx + (py - cy) * vy) / len2;
    t = std::clamp(t, 0.0, 1.0);
    double dx = px - (cx + t * vx), dy = py - (cy + t * vy);
    return std::sqrt(dx * dx + dy * dy);
  };

  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double px = static_cast<double>(x), py = static_cast<double>(y);
      if (dist_to_rod(px, py) <= thickness) {
        put(0, y, x, 220);
        put(1, y, x, 90);
        put(2, y, x, 60);
      }
      double bx = px - tip_x, by = py - tip_y;
      if (bx * bx + by * by <= bob_r * bob_r) {
        put(0, y, x, 240);
        put(1, y, x, 210);
        put(2, y, x, 80);
      }
    }
  return obs;
}

void PixelPendulum::save_state(std::ostream& os) const {
  write_f64(os, theta_);
  write_f64(os, omega_);
  write_i64(os, steps_);
  write_i64(os, done_ ? 1 : 0);
  rng_.save(os);
}

void PixelPendulum::load_state(std::istream& is) {
  theta_ = read_f64(is);
  omega_ = read_f64(is);
  steps_ = read_i64(is);
  done_ = read_i64(is) != 0;
  rng_.load(is);
}

// ---------------------------------------------------------------------------
// PixelCatch

PixelCatch::PixelCatch(const EnvSpec& spec) : spec_(spec) {}

Observation PixelCatch::reset(std::optional<uint64_t> seed) {
  if (seed) rng_ = Rng(*seed);
  ball_row_ = 0;
  ball_col_ = rng_.uniform_int(0, kGrid - 1);
  paddle_col_ = kGrid / 2;
  done_ = false;
  return render();
}

StepResult PixelCatch::step(const Action& a) {
  if (done_) throw SteppedDoneEnv("catch episode finished");
  int64_t move = a.discrete();  // 0 = left, 1 = stay, 2 = right
  if (move < 0 || move > 2) throw InvalidArgument("catch action must be in {0,1,2}");
  paddle_col_ = std::clamp(paddle_col_ + (move - 1), int64_t{0}, kGrid - 1);
  ++ball_row_;

  float reward = 0.f;
  bool done = false;
  if (ball_row_ == kGrid - 1) {
    reward = (ball_col_ == paddle_col_) ? 1.f : -1.f;
    done = true;
  }
  done_ = done;
  return {render(), reward, done};
}

Observation PixelCatch::render() const {
  int64_t h = spec_.render_h, w = spec_.render_w;
  Observation obs(1, h, w);
  auto& buf = const_cast<std::vector<uint8_t>&>(obs.raw());

  int64_t cell_h = h / kGrid, cell_w = w / kGrid;
  auto fill_cell = [&](int64_t row, int64_t col, uint8_t v) {
    for (int64_t y = row * cell_h; y < (row + 1) * cell_h && y < h; ++y)
      for (int64_t x = col * cell_w; x < (col + 1) * cell_w && x < w; ++x)
        buf[static_cast<size_t>(y * w + x)] = v;
  };

  fill_cell(ball_row_, ball_col_, 255);
  fill_cell(kGrid - 1, paddle_col_, 160);
  return obs;
}

void PixelCatch::save_state(std::ostream& os) const {
  write_i64(os, ball_row_);
  write_i64(os, ball_col_);
  write_i64(os, paddle_col_);
  write_i64(os, done_ ? 1 : 0);
  rng_.save(os);
}

void PixelCatch::load_state(std::istream& is) {
  ball_row_ = read_i64(is);
  ball_col_ = read_i64(is);
  paddle_col_ = read_i64(is);
  done_ = read_i64(is) != 0;
  rng_.load(is);
}

// ---------------------------------------------------------------------------
// Registry

EnvSpec resolve_env_spec(const std::string& id, EnvSpec spec) {
  spec.id = id;
  if (id == "pendulum") {
    spec.action_space = {false, 1};
    spec.grayscale = false;
  } else if (id == "catch") {
    spec.action_space = {true, 3};
    spec.grayscale = true;
  } else {
    throw InvalidSpec("unknown env id: " + id);
  }
  return spec;
}

std::unique_ptr<Env> make_env(const std::string& id, const EnvSpec& spec) {
  if (id == "pendulum") return std::make_unique<PixelPendulum>(spec);
  if (id == "catch") return std::make_unique<PixelCatch>(spec);
  throw InvalidSpec("unknown env id: " + id);
}

}  // namespace mlr
