#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/mlp.hpp"
#include "salsa/policy.hpp"
#include "salsa/rng.hpp"
#include "salsa/trainer.hpp"

using namespace salsa;

namespace {

// Small random frozen autoencoder. The trainer only needs a frozen codec
// with consistent dims; reconstruction quality is irrelevant here.
AutoencoderParams tiny_ae(std::size_t act_dim, std::size_t hd, std::uint64_t seed) {
  Rng rng(seed);
  AutoencoderParams ae;
  ae.encoder = make_mlp({act_dim, 8, hd}, Activation::Tanh, Activation::Identity, 1.0, rng);
  ae.decoder = make_mlp({hd, 8, act_dim}, Activation::Tanh, Activation::Identity, 1.0, rng);
  ae.latent_dim = hd;
  ae.action_dim = act_dim;
  ae.frozen = true;
  return ae;
}

Policy tiny_policy(std::size_t obs_dim, std::size_t act_dim, std::size_t hd, std::uint64_t seed) {
  Rng rng(seed ^ 0x517cc1b727220a95ULL);
  Policy p;
  p.ae = tiny_ae(act_dim, hd, seed);
  p.dynamics = make_mlp({obs_dim, 12, hd * hd}, Activation::Tanh, Activation::Tanh, 2.0, rng);
  p.action_low = Vec(act_dim, -2.0);
  p.action_high = Vec(act_dim, 2.0);
  return p;
}

CriticParams tiny_critic(std::size_t obs_dim, std::size_t act_dim, std::uint64_t seed) {
  Rng rng(seed);
  return CriticParams{
      make_mlp({obs_dim + act_dim, 16, 1}, Activation::Tanh, Activation::Identity, 1.0, rng)};
}

Vec random_vec(std::size_t n, Rng& rng, double scale) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

// Owns the transitions and hands out the pointer view the updates consume.
struct BatchBox {
  std::vector<Transition> items;

  std::vector<const Transition*> view() const {
    std::vector<const Transition*> out;
    for (const Transition& t : items) out.push_back(&t);
    return out;
  }
};

BatchBox random_batch(std::size_t b, std::size_t n, std::size_t m, Rng& rng,
                      bool all_done = false) {
  BatchBox box;
  for (std::size_t i = 0; i < b; ++i) {
    Transition t;
    t.state = random_vec(n, rng, 1.0);
    t.prev_action = random_vec(m, rng, 1.5);
    t.action = random_vec(m, rng, 1.5);
    t.reward = rng.uniform(-5.0, 5.0);
    t.next_state = random_vec(n, rng, 1.0);
    t.done = all_done || rng.uniform() < 0.2;
    box.items.push_back(std::move(t));
  }
  return box;
}

Transition scalar_transition(double reward) {
  Transition t;
  t.state = {reward};
  t.prev_action = {0.0};
  t.action = {0.0};
  t.reward = reward;
  t.next_state = {reward};
  t.done = false;
  return t;
}

double bellman_loss_by_hand(const CriticParams& critic,
                            const std::vector<const Transition*>& batch,
                            const std::vector<double>& targets) {
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double q = critic_value(critic, batch[i]->state, batch[i]->action);
    loss += (q - targets[i]) * (q - targets[i]);
  }
  return loss / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("replay buffer fills, then overwrites the oldest entries") {
  ReplayBuffer buf(8);
  CHECK(buf.capacity() == 8);
  CHECK(buf.size() == 0);
  for (int i = 0; i < 5; ++i) buf.push(scalar_transition(i));
  CHECK(buf.size() == 5);
  CHECK(buf.inserted() == 5);
  for (int i = 5; i < 11; ++i) buf.push(scalar_transition(i));
  CHECK(buf.size() == 8);
  CHECK(buf.inserted() == 11);

  // Sampling everything exposes the full contents: 0, 1, 2 must be gone.
  Rng rng(3);
  std::vector<const Transition*> all;
  buf.sample(8, rng, all);
  std::set<double> rewards;
  for (const Transition* t : all) rewards.insert(t->reward);
  CHECK(rewards == std::set<double>({3, 4, 5, 6, 7, 8, 9, 10}));
}

TEST_CASE("replay buffer sampling is distinct within a batch and deterministic") {
  ReplayBuffer buf(100);
  for (int i = 0; i < 50; ++i) buf.push(scalar_transition(i));

  Rng rng(11);
  std::vector<const Transition*> out;
  buf.sample(50, rng, out);
  std::set<const Transition*> distinct(out.begin(), out.end());
  CHECK(distinct.size() == 50);  // count == size forces every element exactly once

  // Smaller batches stay distinct too.
  for (int round = 0; round < 20; ++round) {
    buf.sample(10, rng, out);
    std::set<const Transition*> seen(out.begin(), out.end());
    CHECK(seen.size() == 10);
  }

  // Same rng seed, same picks.
  Rng r1(99), r2(99);
  std::vector<const Transition*> a, b;
  buf.sample(10, r1, a);
  buf.sample(10, r2, b);
  CHECK(a == b);

  CHECK_THROWS_AS(buf.sample(51, rng, out), std::invalid_argument);
  CHECK_THROWS_AS(buf.sample(0, rng, out), std::invalid_argument);
  CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("critic network shape and scalar evaluation") {
  Rng rng(5);
  CriticParams critic = make_critic(3, 1, rng);
  CHECK(critic.net.input_dim() == 4);
  CHECK(critic.net.output_dim() == 1);
  // (4*200+200) + (200*200+200) + (200*1+1)
  CHECK(critic.net.parameter_count() == 41401);

  Vec s = {0.1, -0.4, 0.8}, a = {0.3};
  Vec joined = {0.1, -0.4, 0.8, 0.3};
  CHECK(critic_value(critic, s, a) == mlp_forward(critic.net, joined)[0]);
  CHECK_THROWS_AS(critic_value(critic, {0.1, 0.2}, a), std::invalid_argument);
}

TEST_CASE("soft update pins at the endpoints and converges geometrically") {
  Rng rng(17);
  MlpParams online = make_mlp({2, 6, 3}, Activation::Tanh, Activation::Identity, 1.0, rng);
  MlpParams target = make_mlp({2, 6, 3}, Activation::Tanh, Activation::Identity, 1.0, rng);
  const MlpParams target0 = target;

  MlpParams t = target;
  soft_update(t, online, 0.0);
  CHECK(weights_hash(t) == weights_hash(target0));  // tau = 0: unchanged

  t = target;
  soft_update(t, online, 1.0);
  CHECK(weights_hash(t) == weights_hash(online));  // tau = 1: exact copy

  // After k blends toward a fixed online net: t_k = o + (1-tau)^k (t_0 - o).
  const double tau = 0.25;
  t = target;
  for (int k = 1; k <= 20; ++k) {
    soft_update(t, online, tau);
    const double decay = std::pow(1.0 - tau, k);
    for (std::size_t li = 0; li < t.layers.size(); ++li) {
      const Mat& tw = t.layers[li].weight;
      const Mat& ow = online.layers[li].weight;
      const Mat& zw = target0.layers[li].weight;
      for (std::size_t i = 0; i < tw.size(); ++i) {
        const double expected = ow.data()[i] + decay * (zw.data()[i] - ow.data()[i]);
        CHECK(tw.data()[i] == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }

  CHECK_THROWS_AS(soft_update(t, online, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(soft_update(t, online, 1.1), std::invalid_argument);
  MlpParams other = make_mlp({2, 7, 3}, Activation::Tanh, Activation::Identity, 1.0, rng);
  CHECK_THROWS_AS(soft_update(other, online, 0.5), std::invalid_argument);
}

TEST_CASE("critic update with gamma 0 regresses on the reward alone") {
  Rng rng(23);
  Policy target_policy = tiny_policy(3, 2, 2, 31);
  CriticParams critic = tiny_critic(3, 2, 41);
  CriticParams target_critic = tiny_critic(3, 2, 43);
  BatchBox box = random_batch(16, 3, 2, rng);
  auto batch = box.view();

  std::vector<double> targets;
  for (const Transition* t : batch) targets.push_back(t->reward);
  const double expected = bellman_loss_by_hand(critic, batch, targets);

  AdamState opt = make_adam_state(critic.net, 1e-3);
  const double loss = critic_update(critic, opt, target_policy, target_critic, batch, 0.0);
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));

  // The step it took should reduce the same regression on the next call.
  const double loss2 = critic_update(critic, opt, target_policy, target_critic, batch, 0.0);
  CHECK(loss2 < loss);
}

TEST_CASE("critic update ignores the bootstrap on done transitions") {
  Rng rng(29);
  Policy target_policy = tiny_policy(3, 2, 2, 31);
  CriticParams target_critic = tiny_critic(3, 2, 43);
  BatchBox box = random_batch(16, 3, 2, rng, /*all_done=*/true);
  auto batch = box.view();

  // All done: the target is exactly r even with a far-from-zero gamma.
  CriticParams critic = tiny_critic(3, 2, 41);
  std::vector<double> targets;
  for (const Transition* t : batch) targets.push_back(t->reward);
  const double expected = bellman_loss_by_hand(critic, batch, targets);
  AdamState opt = make_adam_state(critic.net, 1e-3);
  const double loss = critic_update(critic, opt, target_policy, target_critic, batch, 0.9);
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));

  // Flip done off on the same data and the bootstrap term must show up.
  BatchBox alive = box;
  for (Transition& t : alive.items) t.done = false;
  CriticParams critic2 = tiny_critic(3, 2, 41);
  AdamState opt2 = make_adam_state(critic2.net, 1e-3);
  const double loss_alive =
      critic_update(critic2, opt2, target_policy, target_critic, alive.view(), 0.9);
  CHECK(loss_alive != doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("critic overfits a single batch") {
  Rng rng(37);
  Policy target_policy = tiny_policy(3, 2, 2, 31);
  CriticParams critic = tiny_critic(3, 2, 41);
  CriticParams target_critic = critic;  // frozen targets for the whole test
  BatchBox box = random_batch(16, 3, 2, rng);
  auto batch = box.view();

  AdamState opt = make_adam_state(critic.net, 3e-3);
  const double first = critic_update(critic, opt, target_policy, target_critic, batch, 0.9);
  double last = first;
  for (int i = 0; i < 999; ++i)
    last = critic_update(critic, opt, target_policy, target_critic, batch, 0.9);
  CHECK(last < first);
  CHECK(last < 0.01 * first);  // 16 points, 16 hidden units: a near-exact fit
}

TEST_CASE("critic converges to a constant reward under gamma 0") {
  Rng rng(53);
  Policy target_policy = tiny_policy(3, 2, 2, 31);
  CriticParams critic = tiny_critic(3, 2, 41);
  CriticParams target_critic = tiny_critic(3, 2, 43);
  BatchBox box = random_batch(16, 3, 2, rng);
  for (Transition& t : box.items) t.reward = 3.25;
  auto batch = box.view();

  AdamState opt = make_adam_state(critic.net, 3e-3);
  for (int i = 0; i < 800; ++i)
    critic_update(critic, opt, target_policy, target_critic, batch, 0.0);
  for (const Transition* t : batch)
    CHECK(critic_value(critic, t->state, t->action) == doctest::Approx(3.25).epsilon(0.02));
}

TEST_CASE("actor gradient matches central differences") {
  Rng rng(61);
  Policy policy = tiny_policy(3, 2, 2, 67);
  CriticParams critic = tiny_critic(3, 2, 71);
  BatchBox box = random_batch(8, 3, 2, rng);
  auto batch = box.view();

  double objective = 0.0;
  MlpGrads g = actor_gradient(policy, critic, batch, &objective);
  CHECK(objective == actor_objective(policy, critic, batch));
  REQUIRE(g.weight.size() == policy.dynamics.layers.size());

  const double h = 1e-5;
  int checked = 0;
  for (std::size_t li = 0; li < policy.dynamics.layers.size(); ++li) {
    const Mat& w = policy.dynamics.layers[li].weight;
    for (int pick = 0; pick < 8; ++pick) {
      const std::size_t idx = rng.uniform_int(w.size());
      Policy plus = policy, minus = policy;
      plus.dynamics.layers[li].weight.data()[idx] += h;
      minus.dynamics.layers[li].weight.data()[idx] -= h;
      const double fd =
          (actor_objective(plus, critic, batch) - actor_objective(minus, critic, batch)) / (2 * h);
      const double an = g.weight[li].data()[idx];
      CHECK(std::fabs(fd - an) <= 1e-3 * std::max({std::fabs(fd), std::fabs(an), 1e-8}));
      ++checked;
    }
    for (int pick = 0; pick < 2; ++pick) {
      const std::size_t idx = rng.uniform_int(policy.dynamics.layers[li].bias.size());
      Policy plus = policy, minus = policy;
      plus.dynamics.layers[li].bias[idx] += h;
      minus.dynamics.layers[li].bias[idx] -= h;
      const double fd =
          (actor_objective(plus, critic, batch) - actor_objective(minus, critic, batch)) / (2 * h);
      const double an = g.bias[li][idx];
      CHECK(std::fabs(fd - an) <= 1e-3 * std::max({std::fabs(fd), std::fabs(an), 1e-8}));
      ++checked;
    }
  }
  CHECK(checked == 20);
}

TEST_CASE("zero critic produces an exactly zero actor gradient") {
  Rng rng(73);
  Policy policy = tiny_policy(3, 2, 2, 67);
  CriticParams critic = tiny_critic(3, 2, 71);
  for (auto& layer : critic.net.layers) {
    layer.weight.fill(0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
  BatchBox box = random_batch(8, 3, 2, rng);
  MlpGrads g = actor_gradient(policy, critic, box.view());
  for (const Mat& w : g.weight)
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.data()[i] == 0.0);
  for (const Vec& b : g.bias)
    for (double x : b) CHECK(x == 0.0);
}

TEST_CASE("actor updates touch only the dynamics net and ascend the objective") {
  Rng rng(79);
  Policy policy = tiny_policy(3, 2, 2, 67);
  CriticParams critic = tiny_critic(3, 2, 71);
  BatchBox box = random_batch(16, 3, 2, rng);
  auto batch = box.view();

  const std::uint64_t enc0 = weights_hash(policy.ae.encoder);
  const std::uint64_t dec0 = weights_hash(policy.ae.decoder);
  const std::uint64_t critic0 = weights_hash(critic.net);
  const std::uint64_t dyn0 = weights_hash(policy.dynamics);

  AdamState opt = make_adam_state(policy.dynamics, 1e-3);
  const double first = actor_update(policy, opt, critic, batch);
  double last = first;
  for (int i = 0; i < 999; ++i) last = actor_update(policy, opt, critic, batch);

  CHECK(weights_hash(policy.ae.encoder) == enc0);
  CHECK(weights_hash(policy.ae.decoder) == dec0);
  CHECK(weights_hash(critic.net) == critic0);
  CHECK(weights_hash(policy.dynamics) != dyn0);
  CHECK(last > first);  // ascent, not descent
}

TEST_CASE("actor conditioning: the previous action matters") {
  Rng rng(83);
  Policy policy = tiny_policy(3, 2, 2, 67);
  CriticParams critic = tiny_critic(3, 2, 71);
  BatchBox a = random_batch(8, 3, 2, rng);
  BatchBox b = a;
  for (Transition& t : b.items)
    for (double& x : t.prev_action) x += 0.5;
  CHECK(actor_objective(policy, critic, a.view()) != actor_objective(policy, critic, b.view()));
}

TEST_CASE("updates refuse an unfrozen autoencoder and bad arguments") {
  Rng rng(89);
  Policy policy = tiny_policy(3, 2, 2, 67);
  CriticParams critic = tiny_critic(3, 2, 71);
  CriticParams target_critic = tiny_critic(3, 2, 43);
  BatchBox box = random_batch(4, 3, 2, rng);
  auto batch = box.view();
  AdamState opt = make_adam_state(policy.dynamics, 1e-3);
  AdamState copt = make_adam_state(critic.net, 1e-3);

  Policy thawed = policy;
  thawed.ae.frozen = false;
  CHECK_THROWS_AS(actor_objective(thawed, critic, batch), std::invalid_argument);
  CHECK_THROWS_AS(actor_gradient(thawed, critic, batch), std::invalid_argument);
  CHECK_THROWS_AS(actor_update(thawed, opt, critic, batch), std::invalid_argument);
  CHECK_THROWS_AS(critic_update(critic, copt, thawed, target_critic, batch, 0.9),
                  std::invalid_argument);

  std::vector<const Transition*> empty;
  CHECK_THROWS_AS(actor_objective(policy, critic, empty), std::invalid_argument);
  CHECK_THROWS_AS(critic_update(critic, copt, policy, target_critic, empty, 0.9),
                  std::invalid_argument);
  CHECK_THROWS_AS(critic_update(critic, copt, policy, target_critic, batch, -0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(critic_update(critic, copt, policy, target_critic, batch, 1.5),
                  std::invalid_argument);
}

TEST_CASE("training loop: episode bookkeeping, eval cadence, determinism") {
  AutoencoderParams ae = tiny_ae(1, 4, 101);
  TrainConfig cfg;
  cfg.seed = 7;
  cfg.total_steps = 450;
  cfg.warmup_steps = 150;
  cfg.batch_size = 16;
  cfg.buffer_capacity = 2000;
  cfg.eval_every = 2;
  cfg.eval_episodes = 2;
  cfg.eval_horizon = 60;
  cfg.checkpoint_every = 1;

  std::vector<int> checkpoint_episodes;
  TrainResult r1 = train("pendulum", ae, cfg, [&](const Policy&, const CriticParams&, int ep) {
    checkpoint_episodes.push_back(ep);
  });

  // Pendulum truncates at 200 steps: 450 steps = 2 finished episodes + a stub.
  CHECK(r1.env_steps == 450);
  CHECK(r1.episodes == 2);
  REQUIRE(r1.curve.size() == 2);
  CHECK(r1.curve[0].episode == 0);
  CHECK_FALSE(r1.curve[0].has_eval);
  CHECK(r1.curve[1].episode == 1);
  CHECK(r1.curve[1].has_eval);
  CHECK(r1.best_episode == 1);
  CHECK(r1.best_eval == r1.curve[1].eval_return);
  CHECK(checkpoint_episodes == std::vector<int>({0, 1}));
  CHECK(r1.policy.ae.frozen);
  CHECK_FALSE(r1.diverged);
  CHECK(r1.abort_reason.empty());

  // Same seed and config: the exact same run, including the learned weights.
  TrainResult r2 = train("pendulum", ae, cfg);
  REQUIRE(r2.curve.size() == r1.curve.size());
  for (std::size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].train_return == r2.curve[i].train_return);
    CHECK(r1.curve[i].has_eval == r2.curve[i].has_eval);
    CHECK(r1.curve[i].eval_return == r2.curve[i].eval_return);
  }
  CHECK(weights_hash(r1.policy.dynamics) == weights_hash(r2.policy.dynamics));
  CHECK(weights_hash(r1.critic.net) == weights_hash(r2.critic.net));

  // A different seed takes a different path.
  TrainConfig other = cfg;
  other.seed = 8;
  TrainResult r3 = train("pendulum", ae, other);
  CHECK(weights_hash(r3.policy.dynamics) != weights_hash(r1.policy.dynamics));
}

TEST_CASE("training aborts after consecutive non-improving evaluations") {
  AutoencoderParams ae = tiny_ae(1, 4, 101);
  TrainConfig cfg;
  cfg.seed = 9;
  cfg.total_steps = 1200;
  cfg.warmup_steps = 5000;  // never learns, so greedy evals repeat exactly
  cfg.batch_size = 16;
  cfg.buffer_capacity = 8000;
  cfg.eval_every = 1;
  cfg.eval_episodes = 1;
  cfg.eval_horizon = 50;
  cfg.divergence_patience = 1;

  TrainResult r = train("pendulum", ae, cfg);
  CHECK(r.diverged);
  CHECK(r.abort_reason.find("no evaluation improvement") != std::string::npos);
  CHECK(r.episodes == 2);  // first eval sets the best, second triggers the abort
  REQUIRE(r.curve.size() == 2);
  CHECK(r.curve[0].eval_return == r.curve[1].eval_return);  // frozen policy, fixed eval seeds
  CHECK(r.best_episode == 0);
  CHECK(r.best_eval == r.curve[0].eval_return);
  CHECK(r.env_steps == 400);  // two full pendulum episodes, then the abort
}

TEST_CASE("training config and input validation") {
  AutoencoderParams ae = tiny_ae(1, 4, 101);
  TrainConfig cfg;
  cfg.total_steps = 10;

  TrainConfig bad = cfg;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.tau = 0.0;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.tau = 1.5;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.buffer_capacity = 8;
  bad.batch_size = 16;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.total_steps = 0;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.eval_every = 0;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.noise_sigma = -0.1;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);
  bad = cfg;
  bad.actor_lr = 0.0;
  CHECK_THROWS_AS(train("pendulum", ae, bad), std::invalid_argument);

  AutoencoderParams thawed = ae;
  thawed.frozen = false;
  CHECK_THROWS_AS(train("pendulum", thawed, cfg), std::invalid_argument);

  AutoencoderParams wrong_dim = tiny_ae(2, 4, 101);
  CHECK_THROWS_AS(train("pendulum", wrong_dim, cfg), std::invalid_argument);

  CHECK_THROWS_AS(train("lunar_lander", ae, cfg), std::invalid_argument);
}
