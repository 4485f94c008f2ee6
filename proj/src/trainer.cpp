#include "salsa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "salsa/errors.hpp"

namespace salsa {

namespace {

void check_finite_range(double v, double lo, double hi, bool open_lo, const char* name) {
  const bool above = open_lo ? v > lo : v >= lo;
  if (!std::isfinite(v) || !above || v > hi) {
    throw std::invalid_argument(std::string("TrainConfig: ") + name + " = " + std::to_string(v) +
                                " out of range");
  }
}

void validate(const TrainConfig& cfg) {
  check_finite_range(cfg.gamma, 0.0, 1.0, false, "gamma");
  check_finite_range(cfg.tau, 0.0, 1.0, true, "tau");
  check_finite_range(cfg.noise_sigma, 0.0, 1e9, false, "noise_sigma");
  check_finite_range(cfg.noise_sigma_final, 0.0, 1e9, false, "noise_sigma_final");
  if (cfg.batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (cfg.buffer_capacity < cfg.batch_size)
    throw std::invalid_argument("TrainConfig: buffer_capacity smaller than batch_size");
  if (cfg.total_steps == 0) throw std::invalid_argument("TrainConfig: total_steps must be positive");
  if (cfg.eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  if (cfg.eval_episodes < 1) throw std::invalid_argument("TrainConfig: eval_episodes must be >= 1");
  if (cfg.eval_horizon < 1) throw std::invalid_argument("TrainConfig: eval_horizon must be >= 1");
  if (!(cfg.actor_lr > 0.0) || !std::isfinite(cfg.actor_lr))
    throw std::invalid_argument("TrainConfig: actor_lr must be positive");
  if (!(cfg.critic_lr > 0.0) || !std::isfinite(cfg.critic_lr))
    throw std::invalid_argument("TrainConfig: critic_lr must be positive");
  if (cfg.divergence_patience < 1)
    throw std::invalid_argument("TrainConfig: divergence_patience must be >= 1");
  if (cfg.checkpoint_every < 0)
    throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
}

void copy_row(const Vec& src, Mat& dst, std::size_t r, const char* what) {
  if (src.size() != dst.cols())
    throw std::invalid_argument(std::string("batch: inconsistent ") + what + " size " +
                                std::to_string(src.size()) + " vs " + std::to_string(dst.cols()));
  std::copy(src.begin(), src.end(), dst.row(r));
}

// out = [a | b] column-wise.
void concat_cols(const Mat& a, const Mat& b, Mat& out) {
  out.reshape(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r), a.row(r) + a.cols(), out.row(r));
    std::copy(b.row(r), b.row(r) + b.cols(), out.row(r) + a.cols());
  }
}

// z2[r] = z[r] + A_r z[r], with A_r the row-major hd x hd matrix in a_flat's row r.
void apply_latent_update(const Mat& z, const Mat& a_flat, Mat& z2) {
  const std::size_t b = z.rows(), hd = z.cols();
  if (a_flat.rows() != b || a_flat.cols() != hd * hd)
    throw std::invalid_argument("latent update: dynamics output shape does not match latent dim");
  z2.reshape(b, hd);
  for (std::size_t r = 0; r < b; ++r) {
    const double* zr = z.row(r);
    const double* ar = a_flat.row(r);
    double* outr = z2.row(r);
    for (std::size_t i = 0; i < hd; ++i) {
      double acc = zr[i];
      const double* arow = ar + i * hd;
      for (std::size_t j = 0; j < hd; ++j) acc += arow[j] * zr[j];
      outr[i] = acc;
    }
  }
}

void clip_rows(Mat& m, const Vec& low, const Vec& high) {
  if (m.cols() != low.size() || m.cols() != high.size())
    throw std::invalid_argument("clip: action box size does not match action dim");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] = std::clamp(row[c], low[c], high[c]);
  }
}

// Forward half of the actor composition shared by objective and gradient:
// act = Dec(z + N(s) z), z = Enc(prev_action), no clipping. Traces are
// optional so the pure objective pays no bookkeeping.
struct ActorForward {
  Mat states, prev_actions;  // gathered batch
  Mat z, a_flat, z2, act, sa, q;
};

double actor_forward(const Policy& policy, const CriticParams& critic,
                     const std::vector<const Transition*>& batch, ActorForward& f,
                     ForwardTrace* dyn_trace, ForwardTrace* dec_trace, ForwardTrace* q_trace) {
  if (batch.empty()) throw std::invalid_argument("actor update: empty batch");
  if (!policy.ae.frozen)
    throw std::invalid_argument("actor update: autoencoder must be frozen");
  const std::size_t b = batch.size();
  const std::size_t n = batch[0]->state.size(), m = batch[0]->prev_action.size();
  f.states.reshape(b, n);
  f.prev_actions.reshape(b, m);
  for (std::size_t r = 0; r < b; ++r) {
    copy_row(batch[r]->state, f.states, r, "state");
    copy_row(batch[r]->prev_action, f.prev_actions, r, "prev_action");
  }
  f.z = mlp_forward(policy.ae.encoder, f.prev_actions);
  f.a_flat = mlp_forward(policy.dynamics, f.states, dyn_trace);
  apply_latent_update(f.z, f.a_flat, f.z2);
  f.act = mlp_forward(policy.ae.decoder, f.z2, dec_trace);
  concat_cols(f.states, f.act, f.sa);
  f.q = mlp_forward(critic.net, f.sa, q_trace);

  double mean_q = 0.0;
  for (std::size_t r = 0; r < b; ++r) mean_q += f.q(r, 0);
  mean_q /= static_cast<double>(b);
  if (!std::isfinite(mean_q))
    throw numeric_error("actor update: non-finite objective " + std::to_string(mean_q));
  return mean_q;
}

// Shared body for actor_gradient/actor_update: fills `out` with the ascent
// direction dJ/d(dynamics params) and returns the objective J.
double actor_grad_impl(const Policy& policy, const CriticParams& critic,
                       const std::vector<const Transition*>& batch, MlpGrads& out) {
  thread_local ActorForward f;
  thread_local ForwardTrace dyn_trace, dec_trace, q_trace;
  const double objective = actor_forward(policy, critic, batch, f, &dyn_trace, &dec_trace, &q_trace);

  const std::size_t b = batch.size();
  const std::size_t n = f.states.cols(), m = f.act.cols(), hd = f.z.cols();

  // dJ/dq = 1/b, backprop through the critic only for its input gradient.
  thread_local Mat dq, dact, da_flat;
  thread_local MlpGrads q_grads, dec_grads;
  thread_local MlpScratch s1, s2, s3;
  dq.assign(b, 1, 1.0 / static_cast<double>(b));
  mlp_backward(critic.net, q_trace, dq, q_grads, s1);

  // Action columns of the critic's input gradient feed the decoder.
  dact.reshape(b, m);
  for (std::size_t r = 0; r < b; ++r)
    std::copy(q_grads.input.row(r) + n, q_grads.input.row(r) + n + m, dact.row(r));
  mlp_backward(policy.ae.decoder, dec_trace, dact, dec_grads, s2);

  // z2 = z + A z with z independent of the dynamics params, so the only
  // path into N_theta is dA = outer(dz2, z) per batch row.
  da_flat.reshape(b, hd * hd);
  for (std::size_t r = 0; r < b; ++r) {
    const double* dz2 = dec_grads.input.row(r);
    const double* zr = f.z.row(r);
    double* dar = da_flat.row(r);
    for (std::size_t i = 0; i < hd; ++i)
      for (std::size_t j = 0; j < hd; ++j) dar[i * hd + j] = dz2[i] * zr[j];
  }
  mlp_backward(policy.dynamics, dyn_trace, da_flat, out, s3);
  return objective;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[write_] = std::move(t);
  }
  write_ = (write_ + 1) % capacity_;
  ++inserted_;
}

void ReplayBuffer::sample(std::size_t count, Rng& rng,
                          std::vector<const Transition*>& out) const {
  if (count == 0) throw std::invalid_argument("ReplayBuffer: sample count must be positive");
  if (count > data_.size())
    throw std::invalid_argument("ReplayBuffer: sample count " + std::to_string(count) +
                                " exceeds size " + std::to_string(data_.size()));
  // Floyd's algorithm: `count` distinct uniform indices in O(count^2) scans.
  thread_local std::vector<std::size_t> picked;
  picked.clear();
  for (std::size_t j = data_.size() - count; j < data_.size(); ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(j) + 1));
    const bool dup = std::find(picked.begin(), picked.end(), t) != picked.end();
    picked.push_back(dup ? j : t);
  }
  out.clear();
  for (std::size_t idx : picked) out.push_back(&data_[idx]);
}

CriticParams make_critic(std::size_t obs_dim, std::size_t action_dim, Rng& rng) {
  if (obs_dim == 0 || action_dim == 0)
    throw std::invalid_argument("make_critic: dimensions must be positive");
  return CriticParams{
      make_mlp({obs_dim + action_dim, 200, 200, 1}, Activation::Tanh, Activation::Identity, 1.0, rng)};
}

double critic_value(const CriticParams& critic, const Vec& state, const Vec& action) {
  if (state.size() + action.size() != critic.net.input_dim())
    throw std::invalid_argument("critic_value: state+action size does not match critic input");
  Vec input;
  input.reserve(state.size() + action.size());
  input.insert(input.end(), state.begin(), state.end());
  input.insert(input.end(), action.begin(), action.end());
  return mlp_forward(critic.net, input)[0];
}

void soft_update(MlpParams& target, const MlpParams& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("soft_update: tau must be in [0, 1]");
  if (target.layers.size() != online.layers.size())
    throw std::invalid_argument("soft_update: layer count mismatch");
  for (std::size_t li = 0; li < target.layers.size(); ++li) {
    Mat& tw = target.layers[li].weight;
    const Mat& ow = online.layers[li].weight;
    Vec& tb = target.layers[li].bias;
    const Vec& ob = online.layers[li].bias;
    if (tw.rows() != ow.rows() || tw.cols() != ow.cols() || tb.size() != ob.size())
      throw std::invalid_argument("soft_update: layer shape mismatch at layer " + std::to_string(li));
    double* t = tw.data();
    const double* o = ow.data();
    for (std::size_t k = 0; k < tw.size(); ++k) t[k] = tau * o[k] + (1.0 - tau) * t[k];
    for (std::size_t k = 0; k < tb.size(); ++k) tb[k] = tau * ob[k] + (1.0 - tau) * tb[k];
  }
}

double critic_update(CriticParams& critic, AdamState& opt, const Policy& target_policy,
                     const CriticParams& target_critic,
                     const std::vector<const Transition*>& batch, double gamma) {
  if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("critic_update: gamma must be in [0, 1]");
  if (!target_policy.ae.frozen)
    throw std::invalid_argument("critic_update: target policy autoencoder must be frozen");

  const std::size_t b = batch.size();
  const std::size_t n = batch[0]->state.size(), m = batch[0]->action.size();
  thread_local Mat states, actions, next_states;
  thread_local Vec rewards;
  thread_local std::vector<double> not_done;
  states.reshape(b, n);
  actions.reshape(b, m);
  next_states.reshape(b, n);
  rewards.resize(b);
  not_done.resize(b);
  for (std::size_t r = 0; r < b; ++r) {
    copy_row(batch[r]->state, states, r, "state");
    copy_row(batch[r]->action, actions, r, "action");
    copy_row(batch[r]->next_state, next_states, r, "next_state");
    rewards[r] = batch[r]->reward;
    not_done[r] = batch[r]->done ? 0.0 : 1.0;
  }

  // pi'(s', a): the executed action is what gets re-encoded at the next
  // step, so the target policy is conditioned on it (clipped output).
  thread_local Mat z, a_flat, z2, next_actions, sa, q_next, q, dq;
  z = mlp_forward(target_policy.ae.encoder, actions);
  a_flat = mlp_forward(target_policy.dynamics, next_states);
  apply_latent_update(z, a_flat, z2);
  next_actions = mlp_forward(target_policy.ae.decoder, z2);
  clip_rows(next_actions, target_policy.action_low, target_policy.action_high);

  concat_cols(next_states, next_actions, sa);
  q_next = mlp_forward(target_critic.net, sa);

  concat_cols(states, actions, sa);
  thread_local ForwardTrace trace;
  thread_local MlpGrads grads;
  thread_local MlpScratch scratch;
  q = mlp_forward(critic.net, sa, &trace);

  double loss = 0.0;
  dq.reshape(b, 1);
  for (std::size_t r = 0; r < b; ++r) {
    const double target = rewards[r] + gamma * not_done[r] * q_next(r, 0);
    const double diff = q(r, 0) - target;
    loss += diff * diff;
    dq(r, 0) = 2.0 * diff / static_cast<double>(b);
  }
  loss /= static_cast<double>(b);
  if (!std::isfinite(loss))
    throw numeric_error("critic_update: non-finite loss (q[0] = " + std::to_string(q(0, 0)) +
                        ", target q'[0] = " + std::to_string(q_next(0, 0)) + ")");

  mlp_backward(critic.net, trace, dq, grads, scratch);
  adam_step(critic.net, grads, opt);
  return loss;
}

double actor_objective(const Policy& policy, const CriticParams& critic,
                       const std::vector<const Transition*>& batch) {
  thread_local ActorForward f;
  return actor_forward(policy, critic, batch, f, nullptr, nullptr, nullptr);
}

MlpGrads actor_gradient(const Policy& policy, const CriticParams& critic,
                        const std::vector<const Transition*>& batch, double* objective) {
  MlpGrads g;
  const double obj = actor_grad_impl(policy, critic, batch, g);
  if (objective) *objective = obj;
  return g;
}

double actor_update(Policy& policy, AdamState& opt, const CriticParams& critic,
                    const std::vector<const Transition*>& batch) {
  thread_local MlpGrads g;
  const double objective = actor_grad_impl(policy, critic, batch, g);
  // Adam minimizes; flip the sign to ascend the objective.
  for (Mat& w : g.weight)
    for (std::size_t k = 0; k < w.size(); ++k) w.data()[k] = -w.data()[k];
  for (Vec& v : g.bias)
    for (double& x : v) x = -x;
  adam_step(policy.dynamics, g, opt);
  return objective;
}

TrainResult train(const std::string& env_id, const AutoencoderParams& ae, const TrainConfig& cfg,
                  const CheckpointFn& checkpoint) {
  validate(cfg);
  if (!ae.frozen) throw std::invalid_argument("train: autoencoder must be frozen first");
  auto env = make_env(env_id);
  auto eval_env = make_env(env_id);
  const std::size_t n = env->observation_dim(), m = env->action_dim();
  if (ae.action_dim != m)
    throw std::invalid_argument("train: autoencoder action_dim " + std::to_string(ae.action_dim) +
                                " does not match env action_dim " + std::to_string(m));
  const Vec low = env->action_low(), high = env->action_high();

  // Independent deterministic streams: 10 init, 11 exploration, 12 batch
  // sampling, 13 episode resets (indexed by episode), 14 eval rollouts
  // (indexed by eval episode, so every evaluation sees the same starts).
  Rng init_rng(derive_seed(cfg.seed, 10, 0));
  Rng noise_rng(derive_seed(cfg.seed, 11, 0));
  Rng batch_rng(derive_seed(cfg.seed, 12, 0));

  Policy policy{ae, make_dynamics_net(n, ae.latent_dim, init_rng), low, high};
  CriticParams critic = make_critic(n, m, init_rng);
  Policy target_policy = policy;
  CriticParams target_critic = critic;
  AdamState actor_opt = make_adam_state(policy.dynamics, cfg.actor_lr);
  AdamState critic_opt = make_adam_state(critic.net, cfg.critic_lr);
  ReplayBuffer buffer(cfg.buffer_capacity);

  TrainResult res;
  res.best_eval = -std::numeric_limits<double>::infinity();
  Policy best_policy = policy;
  CriticParams best_critic = critic;
  int evals_since_best = 0;

  int episode = 0;
  double ep_return = 0.0;
  Vec obs = env->reset(derive_seed(cfg.seed, 13, 0));
  Vec prev_action(m, 0.0);
  Vec action(m);
  std::vector<const Transition*> batch;
  bool stop = false;

  try {
    for (std::size_t step = 0; step < cfg.total_steps && !stop; ++step) {
      if (step < cfg.warmup_steps) {
        for (std::size_t d = 0; d < m; ++d) action[d] = noise_rng.uniform(low[d], high[d]);
      } else {
        action = policy_step(policy, obs, prev_action);
        const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
        const double sigma = cfg.noise_sigma + (cfg.noise_sigma_final - cfg.noise_sigma) * frac;
        for (std::size_t d = 0; d < m; ++d) {
          action[d] += noise_rng.normal() * sigma * (high[d] - low[d]);
          action[d] = std::clamp(action[d], low[d], high[d]);
        }
      }
      StepResult sr = env->step(action);
      buffer.push({obs, prev_action, action, sr.reward, sr.observation, sr.terminated});
      ++res.env_steps;
      ep_return += sr.reward;
      prev_action = action;
      obs = sr.observation;

      if (step >= cfg.warmup_steps && buffer.size() >= cfg.batch_size) {
        buffer.sample(cfg.batch_size, batch_rng, batch);
        critic_update(critic, critic_opt, target_policy, target_critic, batch, cfg.gamma);
        actor_update(policy, actor_opt, critic, batch);
        soft_update(target_critic.net, critic.net, cfg.tau);
        soft_update(target_policy.dynamics, policy.dynamics, cfg.tau);
      }

      if (sr.terminated || sr.truncated) {
        CurvePoint cp;
        cp.episode = episode;
        cp.train_return = ep_return;
        if ((episode + 1) % cfg.eval_every == 0) {
          double mean_eval = 0.0;
          for (int e = 0; e < cfg.eval_episodes; ++e) {
            Trajectory tr =
                rollout(*eval_env, policy, cfg.eval_horizon, ActionMask{}, derive_seed(cfg.seed, 14, e));
            mean_eval += tr.total_reward();
          }
          mean_eval /= cfg.eval_episodes;
          cp.has_eval = true;
          cp.eval_return = mean_eval;
          if (mean_eval > res.best_eval) {
            res.best_eval = mean_eval;
            res.best_episode = episode;
            best_policy = policy;
            best_critic = critic;
            evals_since_best = 0;
          } else if (++evals_since_best >= cfg.divergence_patience) {
            res.diverged = true;
            res.abort_reason = "no evaluation improvement for " +
                               std::to_string(evals_since_best) + " consecutive evaluations";
            stop = true;
          }
        }
        res.curve.push_back(cp);
        if (!stop && checkpoint && cfg.checkpoint_every > 0 &&
            (episode + 1) % cfg.checkpoint_every == 0) {
          checkpoint(policy, critic, episode);
        }
        ++episode;
        ep_return = 0.0;
        if (!stop) {
          obs = env->reset(derive_seed(cfg.seed, 13, episode));
          prev_action.assign(m, 0.0);
        }
      }
    }
  } catch (const numeric_error& e) {
    res.diverged = true;
    res.abort_reason = e.what();
    res.numeric_abort = true;
  }

  res.episodes = episode;
  if (res.best_episode >= 0) {
    res.policy = std::move(best_policy);
    res.critic = std::move(best_critic);
  } else {
    res.policy = std::move(policy);
    res.critic = std::move(critic);
  }
  return res;
}

}  // namespace salsa
