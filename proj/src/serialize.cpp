#include "salsa/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "salsa/errors.hpp"

namespace salsa {

using json = nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) { fnv_bytes(h, &v, sizeof v); }

void fnv_doubles(std::uint64_t& h, const double* p, std::size_t n) {
  fnv_bytes(h, p, n * sizeof(double));
}

Activation activation_checked(const std::string& name) {
  try {
    return activation_from_name(name);
  } catch (const std::invalid_argument&) {
    throw missing_input_error("unknown activation \"" + name + "\" in weights file");
  }
}

json mat_to_json(const Mat& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Mat mat_from_json(const json& j) {
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols)
    throw missing_input_error("matrix data length does not match its shape");
  Mat m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

json mlp_to_json(const MlpParams& p) {
  json layers = json::array();
  for (const DenseLayer& layer : p.layers) {
    json lj;
    lj["act"] = activation_name(layer.act);
    lj["out_scale"] = layer.out_scale;
    lj["weight"] = mat_to_json(layer.weight);
    lj["bias"] = layer.bias;
    layers.push_back(std::move(lj));
  }
  return json{{"layers", std::move(layers)}};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  for (const json& lj : j.at("layers")) {
    DenseLayer layer;
    layer.act = activation_checked(lj.at("act").get<std::string>());
    layer.out_scale = lj.at("out_scale").get<double>();
    layer.weight = mat_from_json(lj.at("weight"));
    layer.bias = lj.at("bias").get<Vec>();
    if (layer.bias.size() != layer.weight.cols())
      throw missing_input_error("layer bias length does not match its weight shape");
    if (!p.layers.empty() && layer.weight.rows() != p.layers.back().weight.cols())
      throw missing_input_error("consecutive layer shapes do not chain");
    p.layers.push_back(std::move(layer));
  }
  if (p.layers.empty()) throw missing_input_error("network has no layers");
  return p;
}

json ae_to_json(const AutoencoderParams& ae) {
  json j;
  j["action_dim"] = ae.action_dim;
  j["latent_dim"] = ae.latent_dim;
  j["frozen"] = ae.frozen;
  j["encoder"] = mlp_to_json(ae.encoder);
  j["decoder"] = mlp_to_json(ae.decoder);
  return j;
}

AutoencoderParams ae_from_json(const json& j) {
  AutoencoderParams ae;
  ae.action_dim = j.at("action_dim").get<std::size_t>();
  ae.latent_dim = j.at("latent_dim").get<std::size_t>();
  ae.frozen = j.at("frozen").get<bool>();
  ae.encoder = mlp_from_json(j.at("encoder"));
  ae.decoder = mlp_from_json(j.at("decoder"));
  if (ae.encoder.input_dim() != ae.action_dim || ae.encoder.output_dim() != ae.latent_dim ||
      ae.decoder.input_dim() != ae.latent_dim || ae.decoder.output_dim() != ae.action_dim)
    throw missing_input_error("autoencoder net shapes disagree with its declared dims");
  return ae;
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["gamma"] = c.gamma;
  j["tau"] = c.tau;
  j["batch_size"] = c.batch_size;
  j["buffer_capacity"] = c.buffer_capacity;
  j["noise_sigma"] = c.noise_sigma;
  j["noise_sigma_final"] = c.noise_sigma_final;
  j["warmup_steps"] = c.warmup_steps;
  j["total_steps"] = c.total_steps;
  j["eval_every"] = c.eval_every;
  j["eval_episodes"] = c.eval_episodes;
  j["eval_horizon"] = c.eval_horizon;
  j["actor_lr"] = c.actor_lr;
  j["critic_lr"] = c.critic_lr;
  j["divergence_patience"] = c.divergence_patience;
  j["checkpoint_every"] = c.checkpoint_every;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.gamma = j.at("gamma").get<double>();
  c.tau = j.at("tau").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.noise_sigma_final = j.at("noise_sigma_final").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
  c.total_steps = j.at("total_steps").get<std::size_t>();
  c.eval_every = j.at("eval_every").get<int>();
  c.eval_episodes = j.at("eval_episodes").get<int>();
  c.eval_horizon = j.at("eval_horizon").get<int>();
  c.actor_lr = j.at("actor_lr").get<double>();
  c.critic_lr = j.at("critic_lr").get<double>();
  c.divergence_patience = j.at("divergence_patience").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw missing_input_error("cannot write " + path);
}

json parse_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw missing_input_error(std::string("no ") + what + " at " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw missing_input_error(std::string(what) + " at " + path +
                              " is not valid JSON: " + e.what());
  }
  return j;
}

// Shared wrapper checks for both artifact kinds.
json checked_document(const std::string& path, const char* kind, const char* what) {
  json j = parse_file(path, what);
  try {
    if (j.at("kind").get<std::string>() != kind)
      throw missing_input_error(path + " holds a \"" + j.at("kind").get<std::string>() +
                                "\" artifact, expected \"" + kind + "\"");
    const int version = j.at("format_version").get<int>();
    if (version != kBundleFormatVersion)
      throw missing_input_error(path + " has format version " + std::to_string(version) +
                                ", this build reads version " +
                                std::to_string(kBundleFormatVersion));
  } catch (const json::exception& e) {
    throw missing_input_error(std::string(what) + " at " + path + " is missing fields: " + e.what());
  }
  return j;
}

std::uint64_t ae_hash(const AutoencoderParams& ae) {
  std::uint64_t h = kFnvOffset;
  fnv_u64(h, ae.action_dim);
  fnv_u64(h, ae.latent_dim);
  fnv_u64(h, ae.frozen ? 1 : 0);
  fnv_u64(h, weights_hash(ae.encoder));
  fnv_u64(h, weights_hash(ae.decoder));
  return h;
}

}  // namespace

std::uint64_t ModelBundle::content_hash() const {
  std::uint64_t h = kFnvOffset;
  fnv_u64(h, static_cast<std::uint64_t>(format_version));
  fnv_bytes(h, env_id.data(), env_id.size());
  fnv_u64(h, latent_dim);
  fnv_doubles(h, action_low.data(), action_low.size());
  fnv_doubles(h, action_high.data(), action_high.size());
  fnv_u64(h, ae_hash(ae));
  fnv_u64(h, weights_hash(dynamics));
  fnv_u64(h, weights_hash(critic));
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void save_bundle(const ModelBundle& bundle, const std::string& path) {
  json j;
  j["kind"] = "bundle";
  j["format_version"] = bundle.format_version;
  j["env_id"] = bundle.env_id;
  j["latent_dim"] = bundle.latent_dim;
  j["action_low"] = bundle.action_low;
  j["action_high"] = bundle.action_high;
  j["autoencoder"] = ae_to_json(bundle.ae);
  j["dynamics"] = mlp_to_json(bundle.dynamics);
  j["critic"] = mlp_to_json(bundle.critic);
  j["train_config"] = train_config_to_json(bundle.config);
  j["content_hash"] = hash_hex(bundle.content_hash());
  write_text_file(path, j.dump(1));
}

ModelBundle load_bundle(const std::string& path) {
  json j = checked_document(path, "bundle", "model bundle");
  ModelBundle b;
  try {
    b.format_version = j.at("format_version").get<int>();
    b.env_id = j.at("env_id").get<std::string>();
    b.latent_dim = j.at("latent_dim").get<std::size_t>();
    b.action_low = j.at("action_low").get<Vec>();
    b.action_high = j.at("action_high").get<Vec>();
    b.ae = ae_from_json(j.at("autoencoder"));
    b.dynamics = mlp_from_json(j.at("dynamics"));
    b.critic = mlp_from_json(j.at("critic"));
    b.config = train_config_from_json(j.at("train_config"));
    const std::string stored = j.at("content_hash").get<std::string>();
    if (stored != hash_hex(b.content_hash()))
      throw missing_input_error("model bundle at " + path +
                                " fails hash verification (corrupt or hand-edited)");
  } catch (const json::exception& e) {
    throw missing_input_error("model bundle at " + path + " is missing fields: " + e.what());
  }
  return b;
}

void save_autoencoder(const AutoencoderParams& ae, const std::string& env_id,
                      const std::string& path) {
  json j;
  j["kind"] = "autoencoder";
  j["format_version"] = kBundleFormatVersion;
  j["env_id"] = env_id;
  j["autoencoder"] = ae_to_json(ae);
  j["content_hash"] = hash_hex(ae_hash(ae));
  write_text_file(path, j.dump(1));
}

AutoencoderParams load_autoencoder(const std::string& path, std::string* env_id) {
  json j = checked_document(path, "autoencoder", "autoencoder weights file");
  try {
    AutoencoderParams ae = ae_from_json(j.at("autoencoder"));
    const std::string stored = j.at("content_hash").get<std::string>();
    if (stored != hash_hex(ae_hash(ae)))
      throw missing_input_error("autoencoder weights at " + path + " fail hash verification");
    if (env_id) *env_id = j.at("env_id").get<std::string>();
    return ae;
  } catch (const json::exception& e) {
    throw missing_input_error("autoencoder weights at " + path +
                              " are missing fields: " + e.what());
  }
}

namespace {

// 17 significant digits: every double round-trips through the CSV exactly.
void csv_double(std::ostream& os, double v) {
  os << std::setprecision(17) << v;
}

}  // namespace

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
  std::ostringstream os;
  os << "episode,return,eval_return\n";
  for (const CurvePoint& c : curve) {
    os << c.episode << ',';
    csv_double(os, c.train_return);
    os << ',';
    if (c.has_eval) csv_double(os, c.eval_return);
    os << '\n';
  }
  write_text_file(path, os.str());
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  if (traj.steps.empty()) throw std::invalid_argument("write_trajectory_csv: empty trajectory");
  const std::size_t n = traj.steps.front().state.size();
  const std::size_t m = traj.steps.front().action.size();
  std::ostringstream os;
  os << 't';
  for (std::size_t i = 0; i < n; ++i) os << ",state_" << i;
  for (std::size_t i = 0; i < m; ++i) os << ",action_" << i;
  os << ",reward,rho,im_max\n";
  for (const TrajectoryStep& s : traj.steps) {
    const SpectralReport rep = spectral_report(s.a);
    os << s.t;
    for (double v : s.state) {
      os << ',';
      csv_double(os, v);
    }
    for (double v : s.action) {
      os << ',';
      csv_double(os, v);
    }
    os << ',';
    csv_double(os, s.reward);
    os << ',';
    csv_double(os, rep.rho);
    os << ',';
    csv_double(os, rep.im_max);
    os << '\n';
  }
  write_text_file(path, os.str());
}

void write_trajectory_json(const Trajectory& traj, const std::string& path) {
  json steps = json::array();
  for (const TrajectoryStep& s : traj.steps) {
    const SpectralReport rep = spectral_report(s.a);
    json sj;
    sj["t"] = s.t;
    sj["state"] = s.state;
    sj["observation"] = s.observation;
    sj["action"] = s.action;
    sj["z_before"] = s.z_before;
    sj["z_after"] = s.z_after;
    sj["a"] = mat_to_json(s.a);
    sj["reward"] = s.reward;
    sj["terminated"] = s.terminated;
    sj["truncated"] = s.truncated;
    sj["masked"] = s.masked;
    sj["rho"] = rep.rho;
    sj["im_max"] = rep.im_max;
    steps.push_back(std::move(sj));
  }
  json j;
  j["kind"] = "trajectory";
  j["format_version"] = kBundleFormatVersion;
  j["env_id"] = traj.env_id;
  j["seed"] = traj.seed;
  j["initial_state"] = traj.initial_state;
  j["steps"] = std::move(steps);
  write_text_file(path, j.dump(1));
}

Trajectory load_trajectory(const std::string& path) {
  json j = checked_document(path, "trajectory", "trajectory file");
  Trajectory traj;
  try {
    traj.env_id = j.at("env_id").get<std::string>();
    traj.seed = j.at("seed").get<std::uint64_t>();
    traj.initial_state = j.at("initial_state").get<Vec>();
    for (const json& sj : j.at("steps")) {
      TrajectoryStep s;
      s.t = sj.at("t").get<int>();
      s.state = sj.at("state").get<Vec>();
      s.observation = sj.at("observation").get<Vec>();
      s.action = sj.at("action").get<Vec>();
      s.z_before = sj.at("z_before").get<Vec>();
      s.z_after = sj.at("z_after").get<Vec>();
      s.a = mat_from_json(sj.at("a"));
      s.reward = sj.at("reward").get<double>();
      s.terminated = sj.at("terminated").get<bool>();
      s.truncated = sj.at("truncated").get<bool>();
      s.masked = sj.at("masked").get<bool>();
      traj.steps.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw missing_input_error("trajectory at " + path + " is missing fields: " + e.what());
  }
  return traj;
}

namespace {

json mat_rows_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i)
    rows.push_back(std::vector<double>(m.row(i), m.row(i) + m.cols()));
  return rows;
}

// -inf exponents (zero Floquet multipliers) are not representable in JSON
// numbers; encode non-finite components as strings.
json finite_or_string(double v) {
  if (std::isfinite(v)) return json(v);
  std::ostringstream os;
  os << v;
  return json(os.str());
}

json complex_list_json(const std::vector<Complex>& values) {
  json out = json::array();
  for (const Complex& c : values) out.push_back({finite_or_string(c.real()), finite_or_string(c.imag())});
  return out;
}

}  // namespace

void write_contour_json(const ContourGrid& grid, const std::string& path) {
  json axes = json::array();
  for (const Vec& axis : grid.axes) axes.push_back(axis);
  json contour = json::array();
  for (const auto& [x, y] : grid.rho_one_contour) contour.push_back({x, y});
  json j;
  j["t"] = grid.t;
  j["dims"] = grid.dims;
  j["axes"] = std::move(axes);
  j["rho"] = mat_rows_json(grid.rho);
  j["im_max"] = mat_rows_json(grid.im_max);
  j["anchor_state"] = grid.anchor_state;
  j["rho_one_contour"] = std::move(contour);
  write_text_file(path, j.dump(1));
}

void write_kreiss_json(const std::vector<KreissStepReport>& steps, KreissMode mode,
                       const std::string& path) {
  json step_array = json::array();
  Vec computed;
  for (const KreissStepReport& s : steps) {
    json sj;
    sj["t"] = s.t;
    sj["rho"] = s.rho;
    sj["normality_defect"] = s.normality_defect;
    sj["computed"] = s.computed;
    if (s.computed) {
      sj["kreiss"] = s.kreiss;
      computed.push_back(s.kreiss);
    }
    step_array.push_back(std::move(sj));
  }
  json j;
  j["mode"] = mode == KreissMode::standard ? "standard" : "paper-literal";
  j["steps"] = std::move(step_array);
  j["computed_count"] = computed.size();
  if (!computed.empty()) {
    std::sort(computed.begin(), computed.end());
    j["max_kreiss"] = computed.back();
    const std::size_t mid = computed.size() / 2;
    j["median_kreiss"] = computed.size() % 2 ? computed[mid]
                                             : 0.5 * (computed[mid - 1] + computed[mid]);
  }
  write_text_file(path, j.dump(1));
}

void write_floquet_json(const FloquetReport& report, std::size_t signal_dim,
                        bool full_episode_fallback, const std::string& path) {
  json j;
  j["t1"] = report.t1;
  j["t2"] = report.t2;
  j["dt"] = report.dt;
  j["period_steps"] = report.t2 - report.t1;
  j["signal_dim"] = signal_dim;
  j["full_episode_fallback"] = full_episode_fallback;
  j["multipliers"] = complex_list_json(report.multipliers);
  j["exponents"] = complex_list_json(report.exponents);
  j["zero_multiplier_warning"] = report.zero_multiplier_warning;
  j["monodromy"] = mat_rows_json(report.monodromy);
  write_text_file(path, j.dump(1));
}

ActionGridExport build_action_grid(const Policy& policy, const Vec& theta_axis,
                                   const Vec& theta_dot_axis, const Vec& prev_action) {
  if (policy.dynamics.input_dim() != 3)
    throw std::invalid_argument(
        "build_action_grid: the (theta, theta_dot) sweep needs a 3-dim observation policy");
  if (prev_action.size() != policy.action_dim())
    throw std::invalid_argument("build_action_grid: prev_action size does not match the policy");
  if (theta_axis.empty() || theta_dot_axis.empty())
    throw std::invalid_argument("build_action_grid: empty axis");
  ActionGridExport grid;
  grid.theta_axis = theta_axis;
  grid.theta_dot_axis = theta_dot_axis;
  grid.prev_action = prev_action;
  grid.action.resize(theta_axis.size());
  for (std::size_t i = 0; i < theta_axis.size(); ++i) {
    grid.action[i].resize(theta_dot_axis.size());
    for (std::size_t k = 0; k < theta_dot_axis.size(); ++k) {
      const Vec obs = {std::cos(theta_axis[i]), std::sin(theta_axis[i]), theta_dot_axis[k]};
      grid.action[i][k] = policy_step(policy, obs, prev_action);
    }
  }
  return grid;
}

void write_action_grid_json(const ActionGridExport& grid, const std::string& path) {
  json action = json::array();
  for (const auto& row : grid.action) {
    json jrow = json::array();
    for (const Vec& a : row) jrow.push_back(a);
    action.push_back(std::move(jrow));
  }
  json j;
  j["theta_axis"] = grid.theta_axis;
  j["theta_dot_axis"] = grid.theta_dot_axis;
  j["prev_action"] = grid.prev_action;
  j["action"] = std::move(action);
  write_text_file(path, j.dump(1));
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw missing_input_error("cannot read " + path + " for hashing");
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    fnv_bytes(h, buf, static_cast<std::size_t>(in.gcount()));
  return h;
}

}  // namespace salsa
