#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "salsa/mat.hpp"

namespace salsa {

// Physical and episode parameters for both environments. Unused fields are
// ignored by the environment that does not define them. Defaults mirror the
// usual Gym constants; see configs/*.cfg for the key=value form.
struct EnvConfig {
  double gravity = 10.0;
  double dt = 0.05;
  int max_episode_steps = 200;
  std::uint64_t seed = 0;

  // pendulum
  double mass = 1.0;
  double length = 1.0;
  double max_torque = 2.0;
  double max_speed = 8.0;

  // cartpole
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_mag = 10.0;
  double x_threshold = 2.4;
  double angle_threshold = 0.20943951023931953;  // 12 degrees
};

EnvConfig pendulum_defaults();
EnvConfig cartpole_defaults();
void validate(const EnvConfig& c);

struct StepResult {
  Vec observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::string id() const = 0;
  virtual const EnvConfig& config() const = 0;
  virtual std::size_t observation_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual Vec action_low() const = 0;
  virtual Vec action_high() const = 0;
  virtual Vec reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Vec& action) = 0;

  // Internal coordinates: pendulum (theta, theta_dot), cartpole
  // (x, x_dot, phi, phi_dot). Setting them keeps the step counter, so
  // overriding the start state right after reset leaves a full episode.
  virtual Vec state() const = 0;
  virtual void set_state(const Vec& s) = 0;
  virtual Vec observation() const = 0;
  virtual int steps_taken() const = 0;
};

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

// ids: "pendulum", "cartpole".
std::unique_ptr<Env> make_env(const std::string& id, const EnvConfig& config);
std::unique_ptr<Env> make_env(const std::string& id);

}  // namespace salsa
