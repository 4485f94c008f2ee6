#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "salsa/autoencoder.hpp"
#include "salsa/env.hpp"
#include "salsa/mlp.hpp"
#include "salsa/policy.hpp"
#include "salsa/rng.hpp"

namespace salsa {

// One environment step as stored for off-policy learning. prev_action is the
// executed action that preceded `action`: the policy is conditioned on it, so
// both the online policy (actor update) and the target policy (critic
// target) need it alongside the state.
struct Transition {
  Vec state;
  Vec prev_action;
  Vec action;  // executed (noisy, clipped) action
  double reward = 0.0;
  Vec next_state;
  bool done = false;  // true termination only; truncation still bootstraps
};

// Fixed-capacity ring buffer with uniform batch sampling. Sampling is
// without replacement within one batch. Sampled pointers stay valid until
// the next push.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }

  // Fills `out` with `count` distinct uniformly chosen transitions.
  void sample(std::size_t count, Rng& rng, std::vector<const Transition*>& out) const;

 private:
  std::vector<Transition> data_;
  std::size_t capacity_ = 0;
  std::size_t write_ = 0;
  std::uint64_t inserted_ = 0;
};

// Q network over concatenated (state, action).
struct CriticParams {
  MlpParams net;
};

CriticParams make_critic(std::size_t obs_dim, std::size_t action_dim, Rng& rng);
double critic_value(const CriticParams& critic, const Vec& state, const Vec& action);

// All training hyperparameters. The discount and soft-update rate follow the
// problem statement; everything else is a declared default of this
// implementation (the source material leaves them open).
struct TrainConfig {
  double gamma = 0.99;  // in [0, 1]
  double tau = 0.005;   // in (0, 1]
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 100000;
  // Gaussian exploration noise, expressed as a fraction of the per-dim
  // action range, decayed linearly from noise_sigma to noise_sigma_final
  // over total_steps. Noise is added to the raw action, then clipped; the
  // clipped result is what is executed, stored, and re-encoded.
  double noise_sigma = 0.1;
  double noise_sigma_final = 0.0;
  std::size_t warmup_steps = 1000;  // uniform random actions to prime replay
  std::size_t total_steps = 30000;
  int eval_every = 10;    // episodes between greedy evaluations
  int eval_episodes = 5;  // rollouts averaged per evaluation
  int eval_horizon = 1000;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  // Consecutive evaluations without a new best before the run aborts and
  // returns the best-so-far networks.
  int divergence_patience = 1000;
  int checkpoint_every = 0;  // episodes; 0 disables the callback
  std::uint64_t seed = 0;
};

// target <- tau*online + (1-tau)*target, elementwise over every weight and
// bias. tau in [0, 1]; shapes must match.
void soft_update(MlpParams& target, const MlpParams& online, double tau);

// One Adam step on the Bellman regression MSE
//   Q(s, a)  vs  r + gamma * (1 - done) * Q'(s', pi'(s', a))
// where pi' runs the target dynamics net through the frozen autoencoder and
// clips to the action box (the executed-action convention). Returns the
// batch loss before the step.
double critic_update(CriticParams& critic, AdamState& opt, const Policy& target_policy,
                     const CriticParams& target_critic,
                     const std::vector<const Transition*>& batch, double gamma);

// Mean online Q of the policy's (unclipped) actions on the batch states:
// the objective the actor ascends. Pure.
double actor_objective(const Policy& policy, const CriticParams& critic,
                       const std::vector<const Transition*>& batch);

// Ascent direction of actor_objective with respect to the dynamics net
// only: gradients flow through the critic input, the frozen decoder
// Jacobian, and the latent update z + Az back to N_theta. Encoder, decoder,
// and critic parameters receive nothing. Requires policy.ae.frozen.
MlpGrads actor_gradient(const Policy& policy, const CriticParams& critic,
                        const std::vector<const Transition*>& batch,
                        double* objective = nullptr);

// One Adam ascent step on actor_objective. Returns the objective before the
// step.
double actor_update(Policy& policy, AdamState& opt, const CriticParams& critic,
                    const std::vector<const Transition*>& batch);

struct CurvePoint {
  int episode = 0;
  double train_return = 0.0;
  bool has_eval = false;
  double eval_return = 0.0;
};

struct TrainResult {
  Policy policy;        // best-evaluation snapshot (final nets if nothing was evaluated)
  CriticParams critic;  // critic captured at the same snapshot
  std::vector<CurvePoint> curve;
  double best_eval = 0.0;  // -inf when no evaluation ever ran
  int best_episode = -1;
  int episodes = 0;
  std::size_t env_steps = 0;
  bool diverged = false;
  // Set when the run stopped early: either the divergence patience ran out
  // or a numeric failure (non-finite loss/action) was caught. The best-so-far
  // networks are still returned. numeric_abort distinguishes the two.
  std::string abort_reason;
  bool numeric_abort = false;
};

using CheckpointFn = std::function<void(const Policy&, const CriticParams&, int episode)>;

// Full training run on a registered environment: warmup with uniform random
// actions, then one critic and one actor update per env step plus soft
// target updates. Greedy evaluations (fixed seed set, no noise) every
// eval_every episodes drive best-snapshot tracking and divergence abort.
// Deterministic for a fixed (seed, config) pair.
TrainResult train(const std::string& env_id, const AutoencoderParams& ae,
                  const TrainConfig& cfg, const CheckpointFn& checkpoint = {});

}  // namespace salsa
