#include "salsa/env.hpp"

#include <cmath>
#include <stdexcept>

#include "salsa/errors.hpp"
#include "salsa/rng.hpp"

namespace salsa {

EnvConfig pendulum_defaults() {
  EnvConfig c;
  c.gravity = 10.0;
  c.dt = 0.05;
  c.max_episode_steps = 200;
  return c;
}

EnvConfig cartpole_defaults() {
  EnvConfig c;
  c.gravity = 9.8;
  c.dt = 0.02;
  c.max_episode_steps = 1000;
  return c;
}

void validate(const EnvConfig& c) {
  if (!(c.dt > 0.0)) throw std::invalid_argument("EnvConfig: dt must be positive");
  if (c.max_episode_steps < 1)
    throw std::invalid_argument("EnvConfig: max_episode_steps must be at least 1");
  if (!(c.mass > 0.0) || !(c.length > 0.0) || !(c.cart_mass > 0.0) || !(c.pole_mass > 0.0) ||
      !(c.pole_half_length > 0.0))
    throw std::invalid_argument("EnvConfig: masses and lengths must be positive");
  if (!(c.max_speed > 0.0) || !(c.max_torque > 0.0) || !(c.force_mag > 0.0))
    throw std::invalid_argument("EnvConfig: actuation limits must be positive");
}

double wrap_angle(double theta) {
  double w = std::fmod(theta + M_PI, 2.0 * M_PI);
  if (w <= 0.0) w += 2.0 * M_PI;
  return w - M_PI;
}

namespace {

void check_finite_action(const Vec& a, std::size_t dim, const char* env) {
  if (a.size() != dim)
    throw std::invalid_argument(std::string(env) + ": action has " + std::to_string(a.size()) +
                                " components, expected " + std::to_string(dim));
  for (double v : a)
    if (!std::isfinite(v)) throw numeric_error(std::string(env) + ": non-finite action");
}

class Pendulum final : public Env {
 public:
  explicit Pendulum(const EnvConfig& c) : cfg_(c) { validate(cfg_); }

  std::string id() const override { return "pendulum"; }
  const EnvConfig& config() const override { return cfg_; }
  std::size_t observation_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  Vec action_low() const override { return {-cfg_.max_torque}; }
  Vec action_high() const override { return {cfg_.max_torque}; }

  Vec reset(std::uint64_t seed) override {
    Rng rng(seed);
    theta_ = rng.uniform(-M_PI, M_PI);
    theta_dot_ = rng.uniform(-1.0, 1.0);
    steps_ = 0;
    return observation();
  }

  StepResult step(const Vec& action) override {
    check_finite_action(action, 1, "pendulum");
    if (!std::isfinite(theta_) || !std::isfinite(theta_dot_))
      throw numeric_error("pendulum: non-finite state");
    const double u = clip(action[0], -cfg_.max_torque, cfg_.max_torque);
    const double th = wrap_angle(theta_);
    const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

    const double g = cfg_.gravity, m = cfg_.mass, l = cfg_.length, dt = cfg_.dt;
    const double theta_ddot =
        3.0 * g / (2.0 * l) * std::sin(theta_) + 3.0 / (m * l * l) * u;
    theta_dot_ = clip(theta_dot_ + theta_ddot * dt, -cfg_.max_speed, cfg_.max_speed);
    theta_ += theta_dot_ * dt;  // semi-implicit: uses the updated velocity
    ++steps_;

    StepResult r;
    r.observation = observation();
    r.reward = -cost;
    r.terminated = false;
    r.truncated = steps_ >= cfg_.max_episode_steps;
    return r;
  }

  Vec state() const override { return {theta_, theta_dot_}; }
  void set_state(const Vec& s) override {
    if (s.size() != 2) throw std::invalid_argument("pendulum: state is (theta, theta_dot)");
    theta_ = s[0];
    theta_dot_ = s[1];
  }
  Vec observation() const override { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }
  int steps_taken() const override { return steps_; }

 private:
  EnvConfig cfg_;
  double theta_ = 0.0, theta_dot_ = 0.0;
  int steps_ = 0;
};

// Cartpole with a continuous action in [-1, 1] scaling the push force.
class CartPole final : public Env {
 public:
  explicit CartPole(const EnvConfig& c) : cfg_(c) { validate(cfg_); }

  std::string id() const override { return "cartpole"; }
  const EnvConfig& config() const override { return cfg_; }
  std::size_t observation_dim() const override { return 4; }
  std::size_t action_dim() const override { return 1; }
  Vec action_low() const override { return {-1.0}; }
  Vec action_high() const override { return {1.0}; }

  Vec reset(std::uint64_t seed) override {
    Rng rng(seed);
    x_ = rng.uniform(-0.05, 0.05);
    x_dot_ = rng.uniform(-0.05, 0.05);
    phi_ = rng.uniform(-0.05, 0.05);
    phi_dot_ = rng.uniform(-0.05, 0.05);
    steps_ = 0;
    done_ = false;
    return observation();
  }

  StepResult step(const Vec& action) override {
    check_finite_action(action, 1, "cartpole");
    if (!std::isfinite(x_) || !std::isfinite(x_dot_) || !std::isfinite(phi_) ||
        !std::isfinite(phi_dot_))
      throw numeric_error("cartpole: non-finite state");
    if (done_) throw std::logic_error("cartpole: step() after termination; call reset()");

    const double force = clip(action[0], -1.0, 1.0) * cfg_.force_mag;
    const double total_mass = cfg_.cart_mass + cfg_.pole_mass;
    const double polemass_length = cfg_.pole_mass * cfg_.pole_half_length;
    const double cos_phi = std::cos(phi_), sin_phi = std::sin(phi_);

    const double temp = (force + polemass_length * phi_dot_ * phi_dot_ * sin_phi) / total_mass;
    const double phi_acc =
        (cfg_.gravity * sin_phi - cos_phi * temp) /
        (cfg_.pole_half_length * (4.0 / 3.0 - cfg_.pole_mass * cos_phi * cos_phi / total_mass));
    const double x_acc = temp - polemass_length * phi_acc * cos_phi / total_mass;

    const double dt = cfg_.dt;
    x_ += dt * x_dot_;
    x_dot_ += dt * x_acc;
    phi_ += dt * phi_dot_;
    phi_dot_ += dt * phi_acc;
    ++steps_;

    StepResult r;
    r.observation = observation();
    r.reward = 1.0;
    r.terminated = std::fabs(x_) > cfg_.x_threshold || std::fabs(phi_) > cfg_.angle_threshold;
    r.truncated = !r.terminated && steps_ >= cfg_.max_episode_steps;
    done_ = r.terminated;
    return r;
  }

  Vec state() const override { return {x_, x_dot_, phi_, phi_dot_}; }
  void set_state(const Vec& s) override {
    if (s.size() != 4) throw std::invalid_argument("cartpole: state is (x, x_dot, phi, phi_dot)");
    x_ = s[0];
    x_dot_ = s[1];
    phi_ = s[2];
    phi_dot_ = s[3];
    done_ = false;
  }
  Vec observation() const override { return {x_, x_dot_, phi_, phi_dot_}; }
  int steps_taken() const override { return steps_; }

 private:
  EnvConfig cfg_;
  double x_ = 0.0, x_dot_ = 0.0, phi_ = 0.0, phi_dot_ = 0.0;
  int steps_ = 0;
  bool done_ = false;
};

}  // namespace

std::unique_ptr<Env> make_env(const std::string& id, const EnvConfig& config) {
  if (id == "pendulum") return std::make_unique<Pendulum>(config);
  if (id == "cartpole") return std::make_unique<CartPole>(config);
  throw std::invalid_argument("unknown environment id: " + id);
}

std::unique_ptr<Env> make_env(const std::string& id) {
  if (id == "pendulum") return make_env(id, pendulum_defaults());
  if (id == "cartpole") return make_env(id, cartpole_defaults());
  throw std::invalid_argument("unknown environment id: " + id);
}

}  // namespace salsa
