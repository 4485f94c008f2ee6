#include "salsa/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "salsa/autoencoder.hpp"
#include "salsa/env.hpp"
#include "salsa/errors.hpp"
#include "salsa/serialize.hpp"
#include "salsa/stability.hpp"
#include "salsa/trainer.hpp"

namespace salsa {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string utc_timestamp() {
  const std::time_t tt = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// One directory per invocation: <out>/<command>-<utc>-seed<seed>[-k].
fs::path make_run_dir(const std::string& out_root, const std::string& command,
                      std::uint64_t seed) {
  fs::create_directories(out_root);
  const std::string base = command + "-" + utc_timestamp() + "-seed" + std::to_string(seed);
  fs::path dir = fs::path(out_root) / base;
  for (int k = 2; fs::exists(dir); ++k)
    dir = fs::path(out_root) / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw missing_input_error("cannot write " + path.string());
}

// Written before the command body runs: everything needed to reproduce the
// outputs (effective config, seed, input hashes, format versions).
void write_manifest(const fs::path& dir, const std::string& command,
                    const std::vector<std::string>& argv, std::uint64_t seed,
                    const json& effective_config,
                    const std::map<std::string, std::string>& input_hashes) {
  json j;
  j["command"] = command;
  j["argv"] = argv;
  j["timestamp_utc"] = utc_timestamp();
  j["seed"] = seed;
  j["versions"] = {{"bundle_format", kBundleFormatVersion}};
  j["inputs"] = input_hashes;
  j["effective_config"] = effective_config;
  write_text(dir / "manifest.json", j.dump(1));
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad number \"" + text + "\" for " + what);
  }
}

long long parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad integer \"" + text + "\" for " + what);
  }
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

Vec parse_vec(const std::string& text, const std::string& what) {
  Vec out;
  for (const std::string& part : split(text, ',')) out.push_back(parse_double(part, what));
  return out;
}

// key = value lines, '#' comments. Keys are TrainConfig fields; unknown keys
// are rejected so typos fail loudly instead of silently using a default.
void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw missing_input_error("no config file at " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = strip(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    const std::string where = path + ":" + std::to_string(lineno) + " " + key;
    if (key == "gamma") cfg.gamma = parse_double(value, where);
    else if (key == "tau") cfg.tau = parse_double(value, where);
    else if (key == "batch_size") cfg.batch_size = parse_int(value, where);
    else if (key == "buffer_capacity") cfg.buffer_capacity = parse_int(value, where);
    else if (key == "noise_sigma") cfg.noise_sigma = parse_double(value, where);
    else if (key == "noise_sigma_final") cfg.noise_sigma_final = parse_double(value, where);
    else if (key == "warmup_steps") cfg.warmup_steps = parse_int(value, where);
    else if (key == "total_steps") cfg.total_steps = parse_int(value, where);
    else if (key == "eval_every") cfg.eval_every = parse_int(value, where);
    else if (key == "eval_episodes") cfg.eval_episodes = parse_int(value, where);
    else if (key == "eval_horizon") cfg.eval_horizon = parse_int(value, where);
    else if (key == "actor_lr") cfg.actor_lr = parse_double(value, where);
    else if (key == "critic_lr") cfg.critic_lr = parse_double(value, where);
    else if (key == "divergence_patience") cfg.divergence_patience = parse_int(value, where);
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_int(value, where);
    else throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": unknown key \"" + key + "\"");
  }
}

std::string default_ae_path(const std::string& out_root, const std::string& env_id,
                            std::size_t hd) {
  return (fs::path(out_root) / ("ae-" + env_id + "-hd" + std::to_string(hd) + ".json")).string();
}

// Default sweep ranges per observation dimension, used when --range is not
// given to analyze contour.
std::vector<std::pair<double, double>> default_obs_ranges(const std::string& env_id) {
  if (env_id == "pendulum") return {{-1.0, 1.0}, {-1.0, 1.0}, {-8.0, 8.0}};
  if (env_id == "cartpole")
    return {{-2.4, 2.4}, {-3.0, 3.0}, {-0.20943951023931953, 0.20943951023931953}, {-3.0, 3.0}};
  return {};
}

Vec linspace(double lo, double hi, std::size_t n) {
  Vec v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

// ----- command options ------------------------------------------------

struct CommonOpts {
  std::string out_root = "runs";
  std::uint64_t seed = 0;
};

struct TrainAeOpts : CommonOpts {
  std::string env_id;
  std::size_t hd = 3;
  int epochs = 500;
  std::size_t samples = 50000;
  double mse_target = 1e-5;
};

struct TrainOpts : CommonOpts {
  std::string env_id;
  std::size_t hd = 3;
  std::string config_path;
  std::string ae_path;  // empty: derived from out_root/env/hd
  TrainConfig cfg;
};

struct RolloutOpts : CommonOpts {
  std::string bundle_path;
  int steps = 200;
  std::string mask_text;
  std::string export_prefix = "trajectory";
  std::string start_text;  // optional forced initial state
};

struct ContourOpts : CommonOpts {
  std::string bundle_path, trajectory_path;
  std::string dims_text = "0,1";
  std::size_t resolution = 64;
  int every = 10;
  std::string range_text;  // "lo:hi[,lo:hi]", defaults per env
};

struct KreissOpts : CommonOpts {
  std::string trajectory_path;
  std::string mode_text = "standard";
};

struct FloquetOpts : CommonOpts {
  std::string trajectory_path;
  double dt = 1.0;
  int signal_dim = -1;  // default: last observation dimension
};

struct ActionGridOpts : CommonOpts {
  std::string bundle_path;
  std::size_t resolution = 64;
  double theta_dot_max = 8.0;
  std::string prev_action_text;  // default zeros
};

// ----- commands --------------------------------------------------------

int cmd_train_ae(const TrainAeOpts& o, const std::vector<std::string>& argv) {
  auto env = make_env(o.env_id);
  AeTrainConfig acfg;
  acfg.epochs = o.epochs;
  acfg.seed = o.seed;

  const fs::path dir = make_run_dir(o.out_root, "train-ae", o.seed);
  json effective;
  effective["env"] = o.env_id;
  effective["hd"] = o.hd;
  effective["seed"] = o.seed;
  effective["epochs"] = acfg.epochs;
  effective["samples"] = o.samples;
  effective["batch_size"] = acfg.batch_size;
  effective["lr"] = acfg.lr;
  effective["lr_decay"] = acfg.lr_decay;
  effective["lr_decay_epochs"] = acfg.lr_decay_epochs;
  effective["heldout_fraction"] = acfg.heldout_fraction;
  effective["mse_target"] = o.mse_target;
  write_manifest(dir, "train-ae", argv, o.seed, effective, {});

  const auto t0 = std::chrono::steady_clock::now();
  ActionDataset data =
      uniform_action_dataset(env->action_low(), env->action_high(), o.samples, o.seed);
  AeTrainResult result = train_autoencoder(data, o.hd, acfg);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string run_copy = (dir / "autoencoder.json").string();
  save_autoencoder(result.params, o.env_id, run_copy);
  // Stable alias other commands find without knowing the run directory.
  save_autoencoder(result.params, o.env_id, default_ae_path(o.out_root, o.env_id, o.hd));

  const bool met = result.heldout_mse <= o.mse_target;
  std::printf("train-ae %s hd=%zu: heldout mse %.3e (target %.1e, %s) in %.1fs\n",
              o.env_id.c_str(), o.hd, result.heldout_mse, o.mse_target, met ? "met" : "MISSED",
              secs);
  std::printf("wrote %s\n", run_copy.c_str());
  if (!met) {
    std::fprintf(stderr, "error: held-out MSE %.3e exceeds the %.1e target\n",
                 result.heldout_mse, o.mse_target);
    return 3;
  }
  return 0;
}

int cmd_train(const TrainOpts& o, const std::vector<std::string>& argv) {
  auto env = make_env(o.env_id);
  const std::string ae_path =
      o.ae_path.empty() ? default_ae_path(o.out_root, o.env_id, o.hd) : o.ae_path;
  if (!fs::exists(ae_path))
    throw missing_input_error("no pretrained autoencoder at " + ae_path + "; run `salsa train-ae --env " +
                              o.env_id + " --hd " + std::to_string(o.hd) + "` first");
  std::string ae_env;
  AutoencoderParams ae = load_autoencoder(ae_path, &ae_env);
  if (ae_env != o.env_id)
    throw missing_input_error("autoencoder at " + ae_path + " was trained for env \"" + ae_env +
                              "\", not \"" + o.env_id + "\"");
  if (ae.latent_dim != o.hd)
    throw missing_input_error("autoencoder at " + ae_path + " has latent dim " +
                              std::to_string(ae.latent_dim) + ", requested --hd " +
                              std::to_string(o.hd));

  TrainConfig cfg = o.cfg;
  cfg.seed = o.seed;

  const fs::path dir = make_run_dir(o.out_root, "train", o.seed);
  json effective;
  effective["env"] = o.env_id;
  effective["hd"] = o.hd;
  effective["autoencoder"] = ae_path;
  effective["train_config"] = {{"gamma", cfg.gamma},
                               {"tau", cfg.tau},
                               {"batch_size", cfg.batch_size},
                               {"buffer_capacity", cfg.buffer_capacity},
                               {"noise_sigma", cfg.noise_sigma},
                               {"noise_sigma_final", cfg.noise_sigma_final},
                               {"warmup_steps", cfg.warmup_steps},
                               {"total_steps", cfg.total_steps},
                               {"eval_every", cfg.eval_every},
                               {"eval_episodes", cfg.eval_episodes},
                               {"eval_horizon", cfg.eval_horizon},
                               {"actor_lr", cfg.actor_lr},
                               {"critic_lr", cfg.critic_lr},
                               {"divergence_patience", cfg.divergence_patience},
                               {"checkpoint_every", cfg.checkpoint_every},
                               {"seed", cfg.seed}};
  write_manifest(dir, "train", argv, o.seed, effective,
                 {{ae_path, hash_hex(file_hash(ae_path))}});

  const auto bundle_of = [&](const Policy& policy, const MlpParams& critic) {
    ModelBundle b;
    b.env_id = o.env_id;
    b.latent_dim = o.hd;
    b.action_low = env->action_low();
    b.action_high = env->action_high();
    b.ae = ae;
    b.dynamics = policy.dynamics;
    b.critic = critic;
    b.config = cfg;
    return b;
  };

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result =
      train(o.env_id, ae, cfg, [&](const Policy& p, const CriticParams& c, int episode) {
        char name[48];
        std::snprintf(name, sizeof name, "checkpoint-ep%06d.json", episode);
        save_bundle(bundle_of(p, c.net), (dir / name).string());
      });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_bundle(bundle_of(result.policy, result.critic.net), (dir / "bundle.json").string());
  write_curve_csv(result.curve, (dir / "curve.csv").string());

  std::printf("train %s hd=%zu seed=%llu: %d episodes, %zu steps in %.1fs\n", o.env_id.c_str(),
              o.hd, static_cast<unsigned long long>(o.seed), result.episodes, result.env_steps,
              secs);
  if (result.best_episode >= 0)
    std::printf("best eval %.2f at episode %d\n", result.best_eval, result.best_episode);
  if (result.diverged)
    std::printf("stopped early: %s\n", result.abort_reason.c_str());
  std::printf("wrote %s\n", (dir / "bundle.json").string().c_str());
  if (result.numeric_abort) {
    std::fprintf(stderr, "error: training aborted on a numeric failure: %s\n",
                 result.abort_reason.c_str());
    return 3;
  }
  return 0;
}

int cmd_rollout(const RolloutOpts& o, const std::vector<std::string>& argv) {
  ActionMask mask = parse_mask(o.mask_text);  // usage validation before any file i/o
  ModelBundle bundle = load_bundle(o.bundle_path);
  auto env = make_env(bundle.env_id);

  const fs::path dir = make_run_dir(o.out_root, "rollout", o.seed);
  json effective;
  effective["bundle"] = o.bundle_path;
  effective["steps"] = o.steps;
  effective["seed"] = o.seed;
  effective["mask"] = o.mask_text;
  effective["export"] = o.export_prefix;
  effective["start"] = o.start_text;
  write_manifest(dir, "rollout", argv, o.seed, effective,
                 {{o.bundle_path, hash_hex(file_hash(o.bundle_path))}});

  Vec start;
  const Vec* start_ptr = nullptr;
  if (!o.start_text.empty()) {
    start = parse_vec(o.start_text, "--start");
    start_ptr = &start;
  }

  Trajectory traj = rollout(*env, bundle.policy(), o.steps, mask, o.seed, start_ptr);
  const std::string csv = (dir / (o.export_prefix + ".csv")).string();
  const std::string sidecar = (dir / (o.export_prefix + ".json")).string();
  write_trajectory_csv(traj, csv);
  write_trajectory_json(traj, sidecar);

  std::printf("rollout %s seed=%llu: %zu steps, total reward %.2f\n", bundle.env_id.c_str(),
              static_cast<unsigned long long>(o.seed), traj.steps.size(), traj.total_reward());
  std::printf("wrote %s and %s\n", csv.c_str(), sidecar.c_str());
  return 0;
}

int cmd_analyze_contour(const ContourOpts& o, const std::vector<std::string>& argv) {
  ModelBundle bundle = load_bundle(o.bundle_path);
  Trajectory traj = load_trajectory(o.trajectory_path);

  SweepSpec spec;
  for (const std::string& part : split(o.dims_text, ','))
    spec.dims.push_back(static_cast<std::size_t>(parse_int(part, "--dims")));
  spec.resolution = o.resolution;
  spec.every = o.every;
  if (!o.range_text.empty()) {
    for (const std::string& part : split(o.range_text, ',')) {
      const auto bounds = split(part, ':');
      if (bounds.size() != 2)
        throw std::invalid_argument("bad --range segment \"" + part + "\", expected lo:hi");
      spec.ranges.push_back(
          {parse_double(bounds[0], "--range"), parse_double(bounds[1], "--range")});
    }
  } else {
    const auto defaults = default_obs_ranges(bundle.env_id);
    for (std::size_t d : spec.dims) {
      if (d >= defaults.size())
        throw std::invalid_argument("no default range for observation dim " + std::to_string(d) +
                                    " of env \"" + bundle.env_id + "\"; pass --range");
      spec.ranges.push_back(defaults[d]);
    }
  }

  const fs::path dir = make_run_dir(o.out_root, "analyze-contour", o.seed);
  json effective;
  effective["bundle"] = o.bundle_path;
  effective["trajectory"] = o.trajectory_path;
  effective["dims"] = spec.dims;
  effective["resolution"] = spec.resolution;
  effective["every"] = spec.every;
  json ranges = json::array();
  for (const auto& [lo, hi] : spec.ranges) ranges.push_back({lo, hi});
  effective["ranges"] = std::move(ranges);
  write_manifest(dir, "analyze-contour", argv, o.seed, effective,
                 {{o.bundle_path, hash_hex(file_hash(o.bundle_path))},
                  {o.trajectory_path, hash_hex(file_hash(o.trajectory_path))}});

  const std::vector<ContourGrid> frames = stability_contour(bundle.dynamics, traj, spec);
  for (const ContourGrid& frame : frames) {
    char name[32];
    std::snprintf(name, sizeof name, "contour-t%05d.json", frame.t);
    write_contour_json(frame, (dir / name).string());
  }
  std::printf("analyze contour: %zu frames (every %d steps) -> %s\n", frames.size(), spec.every,
              dir.string().c_str());
  return 0;
}

int cmd_analyze_kreiss(const KreissOpts& o, const std::vector<std::string>& argv) {
  Trajectory traj = load_trajectory(o.trajectory_path);
  KreissTraceConfig cfg;
  cfg.mode = o.mode_text == "paper-literal" ? KreissMode::paper_literal : KreissMode::standard;

  const fs::path dir = make_run_dir(o.out_root, "analyze-kreiss", o.seed);
  json effective;
  effective["trajectory"] = o.trajectory_path;
  effective["mode"] = o.mode_text;
  effective["defect_eps"] = cfg.defect_eps;
  write_manifest(dir, "analyze-kreiss", argv, o.seed, effective,
                 {{o.trajectory_path, hash_hex(file_hash(o.trajectory_path))}});

  std::vector<Mat> a_seq;
  for (const TrajectoryStep& s : traj.steps) a_seq.push_back(s.a);
  const std::vector<KreissStepReport> steps = kreiss_trace(a_seq, cfg);
  write_kreiss_json(steps, cfg.mode, (dir / "kreiss.json").string());

  std::size_t computed = 0;
  for (const KreissStepReport& s : steps) computed += s.computed ? 1 : 0;
  std::printf("analyze kreiss (%s): %zu/%zu steps computed -> %s\n", o.mode_text.c_str(),
              computed, steps.size(), (dir / "kreiss.json").string().c_str());
  return 0;
}

int cmd_analyze_floquet(const FloquetOpts& o, const std::vector<std::string>& argv) {
  Trajectory traj = load_trajectory(o.trajectory_path);
  if (traj.steps.empty()) throw std::invalid_argument("trajectory has no steps");
  const std::size_t obs_dim = traj.steps.front().observation.size();
  const std::size_t signal_dim =
      o.signal_dim < 0 ? obs_dim - 1 : static_cast<std::size_t>(o.signal_dim);
  if (signal_dim >= obs_dim)
    throw std::invalid_argument("--signal-dim " + std::to_string(signal_dim) +
                                " out of range for observation dim " + std::to_string(obs_dim));

  const fs::path dir = make_run_dir(o.out_root, "analyze-floquet", o.seed);
  json effective;
  effective["trajectory"] = o.trajectory_path;
  effective["dt"] = o.dt;
  effective["signal_dim"] = signal_dim;
  write_manifest(dir, "analyze-floquet", argv, o.seed, effective,
                 {{o.trajectory_path, hash_hex(file_hash(o.trajectory_path))}});

  Vec signal;
  for (const TrajectoryStep& s : traj.steps) signal.push_back(s.observation[signal_dim]);

  int t1 = 0, t2 = static_cast<int>(traj.steps.size());
  bool fallback = false;
  try {
    std::tie(t1, t2) = detect_period(signal);
  } catch (const no_period_error&) {
    fallback = true;  // aperiodic: analyze the whole episode
  }

  std::vector<Mat> a_seq;
  for (int t = t1; t < t2; ++t) a_seq.push_back(traj.steps[static_cast<std::size_t>(t)].a);
  const FloquetReport report = floquet(a_seq, o.dt, t1);
  write_floquet_json(report, signal_dim, fallback, (dir / "floquet.json").string());

  std::printf("analyze floquet: window [%d, %d)%s, %zu exponents -> %s\n", report.t1, report.t2,
              fallback ? " (full episode; no period found)" : "", report.exponents.size(),
              (dir / "floquet.json").string().c_str());
  return 0;
}

int cmd_analyze_action_grid(const ActionGridOpts& o, const std::vector<std::string>& argv) {
  ModelBundle bundle = load_bundle(o.bundle_path);
  const Policy policy = bundle.policy();
  Vec prev_action(policy.action_dim(), 0.0);
  if (!o.prev_action_text.empty()) prev_action = parse_vec(o.prev_action_text, "--prev-action");

  const fs::path dir = make_run_dir(o.out_root, "analyze-action-grid", o.seed);
  json effective;
  effective["bundle"] = o.bundle_path;
  effective["resolution"] = o.resolution;
  effective["theta_dot_max"] = o.theta_dot_max;
  effective["prev_action"] = prev_action;
  write_manifest(dir, "analyze-action-grid", argv, o.seed, effective,
                 {{o.bundle_path, hash_hex(file_hash(o.bundle_path))}});

  const double pi = std::acos(-1.0);
  const ActionGridExport grid =
      build_action_grid(policy, linspace(-pi, pi, o.resolution),
                        linspace(-o.theta_dot_max, o.theta_dot_max, o.resolution), prev_action);
  write_action_grid_json(grid, (dir / "action-grid.json").string());
  std::printf("analyze action-grid: %zux%zu cells -> %s\n", grid.theta_axis.size(),
              grid.theta_dot_axis.size(), (dir / "action-grid.json").string().c_str());
  return 0;
}

}  // namespace

ActionMask parse_mask(const std::string& text) {
  ActionMask mask;
  if (text.empty()) return mask;
  for (const std::string& part : split(text, ',')) {
    const auto bounds = split(part, ':');
    if (bounds.size() != 2)
      throw std::invalid_argument("bad mask segment \"" + part + "\", expected start:end");
    const long long lo = parse_int(bounds[0], "mask");
    const long long hi = parse_int(bounds[1], "mask");
    mask.intervals.push_back({static_cast<int>(lo), static_cast<int>(hi)});
  }
  return mask;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"latent linear action dynamics: training, rollouts, stability analysis", "salsa"};
  app.require_subcommand(1);

  TrainAeOpts ae_opts;
  TrainOpts train_opts;
  RolloutOpts roll_opts;
  ContourOpts contour_opts;
  KreissOpts kreiss_opts;
  FloquetOpts floquet_opts;
  ActionGridOpts grid_opts;
  int rc = 0;

  CLI::App* train_ae = app.add_subcommand("train-ae", "pretrain the action autoencoder");
  train_ae->add_option("--env", ae_opts.env_id, "environment id (pendulum, cartpole)")->required();
  train_ae->add_option("--hd", ae_opts.hd, "latent dimension");
  train_ae->add_option("--seed", ae_opts.seed, "rng seed");
  train_ae->add_option("--epochs", ae_opts.epochs, "training epochs");
  train_ae->add_option("--samples", ae_opts.samples, "uniform action samples");
  train_ae->add_option("--mse-target", ae_opts.mse_target, "held-out MSE needed for exit code 0");
  train_ae->add_option("--out", ae_opts.out_root, "output root directory");
  train_ae->callback([&] { rc = cmd_train_ae(ae_opts, args); });

  CLI::App* train = app.add_subcommand("train", "train a policy against a pretrained autoencoder");
  train->add_option("--env", train_opts.env_id, "environment id")->required();
  train->add_option("--hd", train_opts.hd, "latent dimension");
  train->add_option("--seed", train_opts.seed, "rng seed");
  train->add_option("--config", train_opts.config_path, "key = value config file");
  train->add_option("--ae", train_opts.ae_path, "autoencoder weights (default: <out>/ae-<env>-hd<hd>.json)");
  train->add_option("--out", train_opts.out_root, "output root directory");
  auto* steps_opt = train->add_option("--steps", train_opts.cfg.total_steps, "environment steps");
  auto* gamma_opt = train->add_option("--gamma", train_opts.cfg.gamma, "discount");
  auto* tau_opt = train->add_option("--tau", train_opts.cfg.tau, "target soft-update rate");
  auto* batch_opt = train->add_option("--batch", train_opts.cfg.batch_size, "batch size");
  auto* buffer_opt = train->add_option("--buffer", train_opts.cfg.buffer_capacity, "replay capacity");
  auto* sigma_opt = train->add_option("--noise-sigma", train_opts.cfg.noise_sigma,
                                      "exploration noise (fraction of action range)");
  auto* sigmaf_opt = train->add_option("--noise-sigma-final", train_opts.cfg.noise_sigma_final,
                                       "final exploration noise");
  auto* warmup_opt = train->add_option("--warmup", train_opts.cfg.warmup_steps, "random warmup steps");
  auto* evev_opt = train->add_option("--eval-every", train_opts.cfg.eval_every, "episodes between evals");
  auto* evep_opt = train->add_option("--eval-episodes", train_opts.cfg.eval_episodes, "rollouts per eval");
  auto* evh_opt = train->add_option("--eval-horizon", train_opts.cfg.eval_horizon, "eval rollout length");
  auto* alr_opt = train->add_option("--actor-lr", train_opts.cfg.actor_lr, "dynamics-net Adam lr");
  auto* clr_opt = train->add_option("--critic-lr", train_opts.cfg.critic_lr, "critic Adam lr");
  auto* pat_opt = train->add_option("--patience", train_opts.cfg.divergence_patience,
                                    "non-improving evals before aborting");
  auto* ckpt_opt = train->add_option("--checkpoint-every", train_opts.cfg.checkpoint_every,
                                     "episodes between checkpoints (0 = off)");
  train->callback([&] {
    // Config file first, then explicit flags override it.
    TrainConfig flags = train_opts.cfg;
    if (!train_opts.config_path.empty()) {
      TrainConfig from_file;
      apply_config_file(from_file, train_opts.config_path);
      TrainConfig merged = from_file;
      if (steps_opt->count()) merged.total_steps = flags.total_steps;
      if (gamma_opt->count()) merged.gamma = flags.gamma;
      if (tau_opt->count()) merged.tau = flags.tau;
      if (batch_opt->count()) merged.batch_size = flags.batch_size;
      if (buffer_opt->count()) merged.buffer_capacity = flags.buffer_capacity;
      if (sigma_opt->count()) merged.noise_sigma = flags.noise_sigma;
      if (sigmaf_opt->count()) merged.noise_sigma_final = flags.noise_sigma_final;
      if (warmup_opt->count()) merged.warmup_steps = flags.warmup_steps;
      if (evev_opt->count()) merged.eval_every = flags.eval_every;
      if (evep_opt->count()) merged.eval_episodes = flags.eval_episodes;
      if (evh_opt->count()) merged.eval_horizon = flags.eval_horizon;
      if (alr_opt->count()) merged.actor_lr = flags.actor_lr;
      if (clr_opt->count()) merged.critic_lr = flags.critic_lr;
      if (pat_opt->count()) merged.divergence_patience = flags.divergence_patience;
      if (ckpt_opt->count()) merged.checkpoint_every = flags.checkpoint_every;
      train_opts.cfg = merged;
    }
    rc = cmd_train(train_opts, args);
  });

  CLI::App* roll = app.add_subcommand("rollout", "run a trained policy and export the trajectory");
  roll->add_option("--bundle", roll_opts.bundle_path, "model bundle path")->required();
  roll->add_option("--steps", roll_opts.steps, "rollout horizon");
  roll->add_option("--seed", roll_opts.seed, "environment reset seed");
  roll->add_option("--mask", roll_opts.mask_text, "zero-action intervals, e.g. 0:30,150:200");
  roll->add_option("--export", roll_opts.export_prefix, "export filename prefix");
  roll->add_option("--start", roll_opts.start_text, "forced initial state, comma-separated");
  roll->add_option("--out", roll_opts.out_root, "output root directory");
  roll->callback([&] { rc = cmd_rollout(roll_opts, args); });

  CLI::App* analyze = app.add_subcommand("analyze", "post-hoc stability analysis");
  analyze->require_subcommand(1);

  CLI::App* contour = analyze->add_subcommand("contour", "spectral-radius sweeps around trajectory states");
  contour->add_option("--bundle", contour_opts.bundle_path, "model bundle path")->required();
  contour->add_option("--trajectory", contour_opts.trajectory_path, "trajectory JSON")->required();
  contour->add_option("--dims", contour_opts.dims_text, "swept observation dims, e.g. 0,1");
  contour->add_option("--res", contour_opts.resolution, "samples per axis");
  contour->add_option("--every", contour_opts.every, "evaluate every k-th step");
  contour->add_option("--range", contour_opts.range_text, "sweep ranges lo:hi[,lo:hi]");
  contour->add_option("--out", contour_opts.out_root, "output root directory");
  contour->callback([&] { rc = cmd_analyze_contour(contour_opts, args); });

  CLI::App* kreiss = analyze->add_subcommand("kreiss", "transient-growth trace over a trajectory");
  kreiss->add_option("--trajectory", kreiss_opts.trajectory_path, "trajectory JSON")->required();
  kreiss->add_option("--mode", kreiss_opts.mode_text, "standard or paper-literal")
      ->check(CLI::IsMember({"standard", "paper-literal"}));
  kreiss->add_option("--out", kreiss_opts.out_root, "output root directory");
  kreiss->callback([&] { rc = cmd_analyze_kreiss(kreiss_opts, args); });

  CLI::App* floq = analyze->add_subcommand("floquet", "periodic stability over a detected cycle");
  floq->add_option("--trajectory", floquet_opts.trajectory_path, "trajectory JSON")->required();
  floq->add_option("--dt", floquet_opts.dt, "propagator time step");
  floq->add_option("--signal-dim", floquet_opts.signal_dim,
                   "observation dim for period detection (default: last)");
  floq->add_option("--out", floquet_opts.out_root, "output root directory");
  floq->callback([&] { rc = cmd_analyze_floquet(floquet_opts, args); });

  CLI::App* agrid = analyze->add_subcommand("action-grid", "greedy action over a (theta, theta_dot) grid");
  agrid->add_option("--bundle", grid_opts.bundle_path, "model bundle path")->required();
  agrid->add_option("--res", grid_opts.resolution, "samples per axis");
  agrid->add_option("--theta-dot-max", grid_opts.theta_dot_max, "theta_dot range half-width");
  agrid->add_option("--prev-action", grid_opts.prev_action_text,
                    "previous-action convention (default zeros)");
  agrid->add_option("--out", grid_opts.out_root, "output root directory");
  agrid->callback([&] { rc = cmd_analyze_action_grid(grid_opts, args); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const missing_input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return rc;
}

}  // namespace salsa
