#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "salsa/autoencoder.hpp"
#include "salsa/env.hpp"
#include "salsa/errors.hpp"
#include "salsa/mlp.hpp"
#include "salsa/policy.hpp"
#include "salsa/rng.hpp"
#include "salsa/serialize.hpp"
#include "salsa/stability.hpp"
#include "salsa/trainer.hpp"

using namespace salsa;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("salsa_serialize_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

AutoencoderParams tiny_ae(std::size_t action_dim, std::size_t latent_dim, std::uint64_t seed) {
  Rng rng(seed);
  AutoencoderParams ae;
  ae.action_dim = action_dim;
  ae.latent_dim = latent_dim;
  ae.encoder = make_mlp({action_dim, 8, latent_dim}, Activation::Tanh, Activation::Identity, 1.0, rng);
  ae.decoder = make_mlp({latent_dim, 8, action_dim}, Activation::Tanh, Activation::Identity, 1.0, rng);
  ae.frozen = true;
  return ae;
}

ModelBundle tiny_bundle(std::uint64_t seed) {
  Rng rng(seed);
  ModelBundle b;
  b.env_id = "pendulum";
  b.latent_dim = 3;
  b.action_low = {-2.0};
  b.action_high = {2.0};
  b.ae = tiny_ae(1, 3, seed + 1);
  b.dynamics = make_dynamics_net(3, 3, rng);
  b.critic = make_critic(3, 1, rng).net;
  b.config.total_steps = 777;  // non-default so the snapshot round-trip is visible
  b.config.gamma = 0.95;
  return b;
}

}  // namespace

TEST_CASE("bundle save -> load -> save is byte identical") {
  const fs::path dir = temp_dir();
  const ModelBundle original = tiny_bundle(42);

  const fs::path first = dir / "a.json";
  const fs::path second = dir / "b.json";
  save_bundle(original, first.string());
  const ModelBundle loaded = load_bundle(first.string());
  save_bundle(loaded, second.string());

  CHECK(slurp(first) == slurp(second));
  CHECK(loaded.env_id == original.env_id);
  CHECK(loaded.latent_dim == original.latent_dim);
  CHECK(loaded.config.total_steps == 777);
  CHECK(loaded.config.gamma == 0.95);
  CHECK(loaded.content_hash() == original.content_hash());

  // weights round-trip exactly, not approximately
  Rng probe(9);
  Vec state = {0.3, -0.4, 1.7};
  const Mat a1 = dynamics_matrix(original.dynamics, state);
  const Mat a2 = dynamics_matrix(loaded.dynamics, state);
  for (std::size_t i = 0; i < a1.size(); ++i) CHECK(a1.data()[i] == a2.data()[i]);
}

TEST_CASE("bundle rejects tampering, wrong kind, wrong version") {
  const fs::path dir = temp_dir();
  const fs::path path = dir / "bundle.json";
  save_bundle(tiny_bundle(1), path.string());

  SUBCASE("bit flip in a weight fails hash verification") {
    json j = json::parse(slurp(path));
    j["dynamics"]["layers"][0]["weight"]["data"][0] =
        j["dynamics"]["layers"][0]["weight"]["data"][0].get<double>() + 1e-9;
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(load_bundle(path.string()), missing_input_error);
  }
  SUBCASE("wrong kind") {
    json j = json::parse(slurp(path));
    j["kind"] = "autoencoder";
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(load_bundle(path.string()), missing_input_error);
  }
  SUBCASE("future format version") {
    json j = json::parse(slurp(path));
    j["format_version"] = 999;
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(load_bundle(path.string()), missing_input_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_bundle((dir / "absent.json").string()), missing_input_error);
  }
  SUBCASE("not json at all") {
    std::ofstream(path) << "definitely not json {";
    CHECK_THROWS_AS(load_bundle(path.string()), missing_input_error);
  }
}

TEST_CASE("autoencoder artifact round-trips with env identity") {
  const fs::path dir = temp_dir();
  const AutoencoderParams ae = tiny_ae(1, 4, 11);
  const fs::path path = dir / "ae.json";
  save_autoencoder(ae, "pendulum", path.string());

  std::string env_id;
  const AutoencoderParams loaded = load_autoencoder(path.string(), &env_id);
  CHECK(env_id == "pendulum");
  CHECK(loaded.latent_dim == 4);
  CHECK(loaded.action_dim == 1);
  CHECK(loaded.frozen);

  const Vec z1 = mlp_forward(ae.encoder, Vec{0.7});
  const Vec z2 = mlp_forward(loaded.encoder, Vec{0.7});
  for (std::size_t i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);

  // tampered weights rejected
  json j = json::parse(slurp(path));
  j["autoencoder"]["encoder"]["layers"][0]["bias"][0] = 1234.5;
  std::ofstream(path) << j.dump();
  CHECK_THROWS_AS(load_autoencoder(path.string()), missing_input_error);
}

TEST_CASE("curve csv has one row per episode and blank evals where absent") {
  const fs::path dir = temp_dir();
  std::vector<CurvePoint> curve = {
      {0, -1400.5, false, 0.0},
      {1, -900.25, true, -850.125},
  };
  const fs::path path = dir / "curve.csv";
  write_curve_csv(curve, path.string());

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "episode,return,eval_return");
  std::getline(in, line);
  CHECK(line == "0,-1400.5,");
  std::getline(in, line);
  CHECK(line == "1,-900.25,-850.125");
  CHECK(!std::getline(in, line));
}

TEST_CASE("trajectory json round-trips and csv carries per-step spectra") {
  const fs::path dir = temp_dir();
  auto env = make_env("pendulum");
  Rng rng(5);
  Policy policy;
  policy.ae = tiny_ae(1, 3, 6);
  policy.dynamics = make_dynamics_net(3, 3, rng);
  policy.action_low = env->action_low();
  policy.action_high = env->action_high();

  ActionMask mask = {{std::pair<int, int>{0, 3}}};
  Trajectory traj = rollout(*env, policy, 12, mask, 99);

  const fs::path jpath = dir / "traj.json";
  write_trajectory_json(traj, jpath.string());
  const Trajectory loaded = load_trajectory(jpath.string());

  REQUIRE(loaded.steps.size() == traj.steps.size());
  CHECK(loaded.env_id == traj.env_id);
  CHECK(loaded.seed == traj.seed);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const TrajectoryStep& a = traj.steps[t];
    const TrajectoryStep& b = loaded.steps[t];
    CHECK(a.t == b.t);
    CHECK(a.masked == b.masked);
    CHECK(a.reward == b.reward);  // bitwise: doubles survive json round-trip
    for (std::size_t i = 0; i < a.state.size(); ++i) CHECK(a.state[i] == b.state[i]);
    for (std::size_t i = 0; i < a.action.size(); ++i) CHECK(a.action[i] == b.action[i]);
    for (std::size_t i = 0; i < a.a.size(); ++i) CHECK(a.a.data()[i] == b.a.data()[i]);
  }
  CHECK(loaded.steps[0].masked);
  CHECK(loaded.steps[0].action[0] == 0.0);
  CHECK(!loaded.steps[5].masked);

  // csv has the documented header and per-step rho consistent with the matrices
  const fs::path cpath = dir / "traj.csv";
  write_trajectory_csv(traj, cpath.string());
  std::ifstream in(cpath);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,state_0,state_1,action_0,reward,rho,im_max");
  std::string row0;
  std::getline(in, row0);
  const SpectralReport rep = spectral_report(traj.steps[0].a);
  std::ostringstream want;
  want.precision(17);
  want << rep.rho;
  CHECK(row0.find(want.str()) != std::string::npos);
}

TEST_CASE("exported actions replayed through a fresh env reproduce exported states") {
  auto env = make_env("pendulum");
  Rng rng(15);
  Policy policy;
  policy.ae = tiny_ae(1, 3, 16);
  policy.dynamics = make_dynamics_net(3, 3, rng);
  policy.action_low = env->action_low();
  policy.action_high = env->action_high();

  const fs::path dir = temp_dir();
  Trajectory traj = rollout(*env, policy, 25, ActionMask{}, 123);
  const fs::path path = dir / "t.json";
  write_trajectory_json(traj, path.string());
  const Trajectory loaded = load_trajectory(path.string());

  // drive a brand-new env by the exported action sequence
  auto env2 = make_env("pendulum");
  env2->reset(123);
  env2->set_state(loaded.initial_state);
  for (const TrajectoryStep& s : loaded.steps) {
    for (std::size_t i = 0; i < s.state.size(); ++i) CHECK(env2->state()[i] == s.state[i]);
    env2->step(s.action);
  }
}

TEST_CASE("contour export carries the documented schema") {
  const fs::path dir = temp_dir();
  ContourGrid grid;
  grid.t = 40;
  grid.dims = {0, 2};
  grid.axes = {{-1.0, 0.0, 1.0}, {-8.0, 0.0, 8.0}};
  grid.rho = Mat(3, 3, 0.5);
  grid.rho(1, 1) = 1.5;
  grid.im_max = Mat(3, 3, 0.0);
  grid.anchor_state = {0.1, 0.2, 0.3};
  grid.rho_one_contour = {{0.0, 0.5}, {0.5, 0.0}};
  const fs::path path = dir / "contour.json";
  write_contour_json(grid, path.string());

  json j = json::parse(slurp(path));
  CHECK(j["t"] == 40);
  CHECK(j["dims"] == json::array({0, 2}));
  CHECK(j["axes"].size() == 2);
  CHECK(j["rho"].size() == 3);
  CHECK(j["rho"][1][1] == 1.5);
  CHECK(j["im_max"][0][0] == 0.0);
  CHECK(j["anchor_state"].size() == 3);
  CHECK(j["rho_one_contour"].size() == 2);
}

TEST_CASE("kreiss export separates computed from skipped steps") {
  const fs::path dir = temp_dir();
  std::vector<KreissStepReport> steps(3);
  steps[0] = {0, 0.9, 1e-12, false, 0.0};
  steps[1] = {1, 1.1, 0.4, true, 2.5};
  steps[2] = {2, 0.7, 0.3, true, 1.5};
  const fs::path path = dir / "kreiss.json";
  write_kreiss_json(steps, KreissMode::standard, path.string());

  json j = json::parse(slurp(path));
  CHECK(j["mode"] == "standard");
  CHECK(j["computed_count"] == 2);
  CHECK(j["max_kreiss"] == 2.5);
  CHECK(j["median_kreiss"] == 2.0);
  REQUIRE(j["steps"].size() == 3);
  CHECK(j["steps"][0]["computed"] == false);
  CHECK(!j["steps"][0].contains("kreiss"));
  CHECK(j["steps"][1]["kreiss"] == 2.5);
}

TEST_CASE("floquet export encodes a zero-multiplier exponent as a string") {
  const fs::path dir = temp_dir();
  Mat a(2, 2, 0.0);
  a(0, 0) = -0.5;  // singular one-step map: second multiplier is exactly 0
  a(1, 1) = -1.0;
  FloquetReport rep = floquet({a}, 1.0, 7);
  REQUIRE(rep.zero_multiplier_warning);

  const fs::path path = dir / "floquet.json";
  write_floquet_json(rep, 1, false, path.string());
  json j = json::parse(slurp(path));
  CHECK(j["t1"] == 7);
  CHECK(j["t2"] == 8);
  CHECK(j["period_steps"] == 1);
  CHECK(j["zero_multiplier_warning"] == true);
  CHECK(j["full_episode_fallback"] == false);
  bool saw_string = false;
  for (const auto& e : j["exponents"])
    if (e[0].is_string()) saw_string = true;
  CHECK(saw_string);
}

TEST_CASE("action grid matches policy_step cell by cell") {
  auto env = make_env("pendulum");
  Rng rng(33);
  Policy policy;
  policy.ae = tiny_ae(1, 3, 34);
  policy.dynamics = make_dynamics_net(3, 3, rng);
  policy.action_low = env->action_low();
  policy.action_high = env->action_high();

  const Vec thetas = {-1.0, 0.0, 2.0};
  const Vec theta_dots = {-4.0, 4.0};
  const Vec prev = {0.5};
  const ActionGridExport grid = build_action_grid(policy, thetas, theta_dots, prev);

  REQUIRE(grid.action.size() == 3);
  REQUIRE(grid.action[0].size() == 2);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    for (std::size_t jd = 0; jd < theta_dots.size(); ++jd) {
      const Vec obs = {std::cos(thetas[i]), std::sin(thetas[i]), theta_dots[jd]};
      const Vec want = policy_step(policy, obs, prev);
      CHECK(grid.action[i][jd][0] == want[0]);
    }
  }

  const fs::path dir = temp_dir();
  const fs::path path = dir / "grid.json";
  write_action_grid_json(grid, path.string());
  json j = json::parse(slurp(path));
  CHECK(j["theta_axis"].size() == 3);
  CHECK(j["theta_dot_axis"].size() == 2);
  CHECK(j["action"].size() == 3);
  CHECK(j["action"][0].size() == 2);
  CHECK(j["prev_action"][0] == 0.5);
}

TEST_CASE("file hash is content addressed") {
  const fs::path dir = temp_dir();
  std::ofstream(dir / "a") << "hello";
  std::ofstream(dir / "b") << "hello";
  std::ofstream(dir / "c") << "hellp";
  CHECK(file_hash((dir / "a").string()) == file_hash((dir / "b").string()));
  CHECK(file_hash((dir / "a").string()) != file_hash((dir / "c").string()));
  CHECK(hash_hex(file_hash((dir / "a").string())).size() == 16);
  CHECK_THROWS_AS(file_hash((dir / "nope").string()), missing_input_error);
}
