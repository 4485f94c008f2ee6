#include "salsa/policy.hpp"

#include <algorithm>
#include <cmath>

namespace salsa {

namespace {

bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::size_t isqrt_exact(std::size_t n, const char* who) {
  const auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (r * r != n)
    throw std::invalid_argument(std::string(who) + ": output width " + std::to_string(n) +
                                " is not a perfect square");
  return r;
}

}  // namespace

MlpParams make_dynamics_net(std::size_t obs_dim, std::size_t latent_dim, Rng& rng) {
  return make_mlp({obs_dim, 200, 200, latent_dim * latent_dim}, Activation::Tanh,
                  Activation::Tanh, 2.0, rng);
}

Mat dynamics_matrix(const MlpParams& net, const Vec& state) {
  const std::size_t hd = isqrt_exact(net.output_dim(), "dynamics_matrix");
  Vec flat = mlp_forward(net, state);
  Mat a(hd, hd);
  std::copy(flat.begin(), flat.end(), a.data());
  return a;
}

Vec latent_step(const Vec& z, const Mat& a) {
  check_square(a, "latent_step");
  if (z.size() != a.rows())
    throw std::invalid_argument("latent_step: latent size " + std::to_string(z.size()) +
                                " does not match matrix dim " + std::to_string(a.rows()));
  Vec az = mat_vec(a, z);
  for (std::size_t i = 0; i < z.size(); ++i) az[i] += z[i];
  return az;
}

Vec policy_step(const Policy& policy, const Vec& state, const Vec& prev_action,
                PolicyStepInfo* info) {
  if (prev_action.size() != policy.action_dim())
    throw std::invalid_argument("policy_step: prev_action size mismatch");
  PolicyStepInfo local;
  local.z_before = encode(policy.ae, prev_action);
  local.a = dynamics_matrix(policy.dynamics, state);
  local.z_after = latent_step(local.z_before, local.a);
  local.raw_action = decode(policy.ae, local.z_after);

  Vec action = local.raw_action;
  for (std::size_t d = 0; d < action.size(); ++d)
    action[d] = clip(action[d], policy.action_low[d], policy.action_high[d]);

  if (!all_finite(local.z_before) || !local.a.all_finite() || !all_finite(local.z_after) ||
      !all_finite(local.raw_action)) {
    std::string what = "policy_step: non-finite intermediate";
    if (info) *info = local;
    throw policy_step_error(what, std::move(local));
  }
  if (info) *info = std::move(local);
  return action;
}

bool ActionMask::active(int t) const {
  for (const auto& [lo, hi] : intervals)
    if (t >= lo && t < hi) return true;
  return false;
}

void ActionMask::validate(int horizon) const {
  auto sorted = intervals;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& [lo, hi] = sorted[i];
    if (lo < 0 || hi > horizon || lo >= hi)
      throw std::invalid_argument("ActionMask: interval [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + ") invalid for horizon " +
                                  std::to_string(horizon));
    if (i > 0 && lo < sorted[i - 1].second)
      throw std::invalid_argument("ActionMask: overlapping intervals");
  }
}

double Trajectory::total_reward() const {
  double s = 0.0;
  for (const auto& step : steps) s += step.reward;
  return s;
}

Trajectory rollout(Env& env, const Policy& policy, int horizon, const ActionMask& mask,
                   std::uint64_t seed, const Vec* start_state) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  mask.validate(horizon);
  if (policy.action_dim() != env.action_dim())
    throw std::invalid_argument("rollout: policy/env action dimensions differ");

  Trajectory traj;
  traj.env_id = env.id();
  traj.seed = seed;
  env.reset(seed);
  if (start_state) env.set_state(*start_state);
  traj.initial_state = env.state();

  const Vec zeros(env.action_dim(), 0.0);
  Vec prev_action = zeros;
  for (int t = 0; t < horizon; ++t) {
    TrajectoryStep step;
    step.t = t;
    step.state = env.state();
    step.observation = env.observation();
    step.masked = mask.active(t);
    try {
      PolicyStepInfo info;
      Vec action = policy_step(policy, step.observation, prev_action, &info);
      step.z_before = std::move(info.z_before);
      step.z_after = std::move(info.z_after);
      step.a = std::move(info.a);
      if (step.masked) action = zeros;
      step.action = std::move(action);
      StepResult res = env.step(step.action);
      step.reward = res.reward;
      step.terminated = res.terminated;
      step.truncated = res.truncated;
    } catch (const numeric_error& e) {
      traj.steps.push_back(std::move(step));
      throw rollout_error("rollout: step " + std::to_string(t) + " failed: " + e.what(),
                          std::move(traj));
    }
    const bool done = step.terminated || step.truncated;
    prev_action = step.action;
    traj.steps.push_back(std::move(step));
    if (done) break;
  }
  return traj;
}

}  // namespace salsa
