#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "salsa/autoencoder.hpp"
#include "salsa/mlp.hpp"
#include "salsa/policy.hpp"
#include "salsa/stability.hpp"
#include "salsa/trainer.hpp"

namespace salsa {

inline constexpr int kBundleFormatVersion = 1;

// Everything a run produces, in one self-contained JSON document: the frozen
// autoencoder, the learned dynamics and critic nets, the action box, and the
// exact training configuration. Exact-precision floats, explicit shapes.
struct ModelBundle {
  int format_version = kBundleFormatVersion;
  std::string env_id;
  std::size_t latent_dim = 0;
  Vec action_low, action_high;
  AutoencoderParams ae;
  MlpParams dynamics;
  MlpParams critic;
  TrainConfig config;

  // FNV-1a over every weight, shape, and identity field. Stored on save,
  // verified on load.
  std::uint64_t content_hash() const;

  Policy policy() const { return Policy{ae, dynamics, action_low, action_high}; }
};

// Bundle and autoencoder artifacts share the wrapper; `kind` tells them
// apart so loading the wrong one fails with a useful message.
void save_bundle(const ModelBundle& bundle, const std::string& path);
// Throws missing_input_error when the file is absent, malformed, the wrong
// kind, a different format version, or fails hash verification.
ModelBundle load_bundle(const std::string& path);

void save_autoencoder(const AutoencoderParams& ae, const std::string& env_id,
                      const std::string& path);
AutoencoderParams load_autoencoder(const std::string& path, std::string* env_id = nullptr);

// Learning curve CSV: header `episode,return,eval_return`; eval_return is
// empty on episodes without an evaluation.
void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path);

// Trajectory CSV: one row per step, `t,state_*,action_*,reward,rho,im_max`
// with the spectral columns computed from the recorded A_t.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

// Full-fidelity JSON sidecar: states, observations, executed actions, latent
// vectors, A_t matrices, rewards, and flags — enough to replay the episode
// bit-exactly and to rerun every analysis.
void write_trajectory_json(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

void write_contour_json(const ContourGrid& grid, const std::string& path);
void write_kreiss_json(const std::vector<KreissStepReport>& steps, KreissMode mode,
                       const std::string& path);

// The floquet report plus how its window was chosen: the signal dimension
// the period was detected on, and whether detection fell back to the full
// episode.
void write_floquet_json(const FloquetReport& report, std::size_t signal_dim,
                        bool full_episode_fallback, const std::string& path);

// Greedy executed action over a (theta, theta_dot) grid for a fixed previous
// action -- the pendulum action-structure visualization.
struct ActionGridExport {
  Vec theta_axis;      // theta in [-pi, pi] by default
  Vec theta_dot_axis;  // theta_dot in [-8, 8] by default
  Vec prev_action;
  // action[i][j] = executed action at (theta_axis[i], theta_dot_axis[j]).
  std::vector<std::vector<Vec>> action;
};

ActionGridExport build_action_grid(const Policy& policy, const Vec& theta_axis,
                                   const Vec& theta_dot_axis, const Vec& prev_action);
void write_action_grid_json(const ActionGridExport& grid, const std::string& path);

// FNV-1a over a file's raw bytes, for input manifests.
std::uint64_t file_hash(const std::string& path);

std::string hash_hex(std::uint64_t h);

}  // namespace salsa
