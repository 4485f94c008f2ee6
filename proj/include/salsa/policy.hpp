#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "salsa/autoencoder.hpp"
#include "salsa/env.hpp"
#include "salsa/errors.hpp"
#include "salsa/mlp.hpp"

namespace salsa {

// State-conditioned dynamics network: observation -> 200 -> 200 -> hd^2 with
// a final tanh scaled by 2, so every matrix entry lands in [-2, 2]. The
// output vector is reshaped row-major into the hd x hd dynamics matrix.
MlpParams make_dynamics_net(std::size_t obs_dim, std::size_t latent_dim, Rng& rng);

// A = net(state), reshaped. The latent size is inferred from the net's
// output width, which must be a perfect square.
Mat dynamics_matrix(const MlpParams& net, const Vec& state);

// z' = z + A z.
Vec latent_step(const Vec& z, const Mat& a);

// Everything needed to act: the frozen autoencoder, the dynamics net, and
// the action box to clip into.
struct Policy {
  AutoencoderParams ae;
  MlpParams dynamics;
  Vec action_low, action_high;

  std::size_t latent_dim() const { return ae.latent_dim; }
  std::size_t action_dim() const { return ae.action_dim; }
};

struct PolicyStepInfo {
  Vec z_before, z_after;
  Mat a;
  Vec raw_action;  // decoder output before clipping
};

// Thrown when a policy step produces a non-finite intermediate; carries the
// diagnostics of the failing step.
class policy_step_error : public numeric_error {
 public:
  policy_step_error(const std::string& what, PolicyStepInfo info)
      : numeric_error(what), info_(std::move(info)) {}
  const PolicyStepInfo& info() const { return info_; }

 private:
  PolicyStepInfo info_;
};

// One action: z = Enc(prev_action); A = net(state); z' = z + A z;
// action = clip(Dec(z')). prev_action must be the previously *executed*
// (clipped) action, zeros at t = 0.
Vec policy_step(const Policy& policy, const Vec& state, const Vec& prev_action,
                PolicyStepInfo* info = nullptr);

// Half-open step intervals during which the executed action is forced to
// zero (the policy still runs and its diagnostics are recorded).
struct ActionMask {
  std::vector<std::pair<int, int>> intervals;

  bool active(int t) const;
  // Intervals must lie within [0, horizon) and not overlap.
  void validate(int horizon) const;
};

struct TrajectoryStep {
  int t = 0;
  Vec state;        // environment state at the start of the step
  Vec observation;  // what the policy saw
  Vec action;       // executed action (clipped; zeros when masked)
  Vec z_before, z_after;
  Mat a;
  double reward = 0.0;
  bool terminated = false, truncated = false;
  bool masked = false;
};

struct Trajectory {
  std::string env_id;
  std::uint64_t seed = 0;
  Vec initial_state;  // state right after reset, for bit-exact replay
  std::vector<TrajectoryStep> steps;

  double total_reward() const;
};

// Thrown when the policy or environment fails mid-episode; carries whatever
// was recorded up to the failing step.
class rollout_error : public numeric_error {
 public:
  rollout_error(const std::string& what, Trajectory partial)
      : numeric_error(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

// Runs the policy for up to `horizon` steps, stopping early when the episode
// ends. When `start_state` is given the environment is forced to it after
// reset (e.g. a hanging-down pendulum start).
Trajectory rollout(Env& env, const Policy& policy, int horizon, const ActionMask& mask,
                   std::uint64_t seed, const Vec* start_state = nullptr);

}  // namespace salsa
