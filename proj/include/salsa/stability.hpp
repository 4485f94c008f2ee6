#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "salsa/mat.hpp"
#include "salsa/mlp.hpp"
#include "salsa/policy.hpp"

namespace salsa {

using Complex = std::complex<double>;

// All eigenvalues with multiplicity, sorted by descending modulus (ties by
// descending real, then imaginary part). Dims <= 2 use closed forms; larger
// matrices go through balancing, Householder Hessenberg reduction, and
// complex single-shift QR iteration. Dim capped at 64.
// Throws std::invalid_argument for non-finite/non-square input and
// numeric_error (naming the matrix) if the iteration fails to converge.
std::vector<Complex> eigenvalues(const Mat& a);

enum class StabilityClass { stable_nonoscillatory, stable_damped_oscillation, unstable };

std::string stability_class_name(StabilityClass c);

struct SpectralReport {
  std::vector<Complex> eigenvalues;
  double rho = 0.0;     // max |lambda_i|
  double im_max = 0.0;  // max |Im(lambda_i)|
  StabilityClass classification = StabilityClass::stable_nonoscillatory;
  bool strictly_stable = false;  // rho < 1 (the boundary-exclusive reading)
  // Eigenvalues of the actual one-step update map I + A, recorded for
  // comparison; the classification above is based on A alone.
  std::vector<Complex> update_eigenvalues;
};

// Classification: rho <= 1 and im_max <= 1e-9 -> stable_nonoscillatory;
// rho <= 1 and im_max > 1e-9 -> stable_damped_oscillation; rho > 1 -> unstable.
SpectralReport spectral_report(const Mat& a);

// ||A A^T - A^T A||_F; zero exactly for normal matrices.
double normality_defect(const Mat& a);

// `standard` is sup_{|z|>1} (|z|-1)*||(zI-A)^-1||_2, the usual transient
// growth bound (always >= 1; the estimate is clamped to 1 from below since
// the supremum includes the |z| -> inf limit). `paper_literal` evaluates
// (|z|-1)/||(zI-A)^-1||_2 instead -- the reciprocal placement -- and is kept
// for side-by-side comparison; it gets no clamp.
enum class KreissMode { standard, paper_literal };

struct KreissSearch {
  int radii = 24;         // log-spaced in (1, max_radius]
  int angles = 64;        // uniform in [0, 2pi)
  int refine_rounds = 3;  // local 5x5 refinements around the best grid point
  double max_radius = 4.0;
};

// Requires rho(a) < 1; throws std::invalid_argument otherwise (the gate).
double kreiss_constant(const Mat& a, KreissMode mode = KreissMode::standard,
                       const KreissSearch& search = {});

struct KreissStepReport {
  int t = 0;
  double rho = 0.0;
  double normality_defect = 0.0;
  bool computed = false;  // gate: rho < 1 and normality_defect > defect_eps
  double kreiss = 0.0;    // valid only when computed
};

struct KreissTraceConfig {
  KreissMode mode = KreissMode::standard;
  double defect_eps = 1e-9;
  KreissSearch search;
};

std::vector<KreissStepReport> kreiss_trace(const std::vector<Mat>& a_seq,
                                           const KreissTraceConfig& cfg = {});

// Thrown by detect_period when the smoothed series has fewer than two local
// maxima; callers may fall back to a full-episode horizon.
class no_period_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Indices of the last two local maxima of the series after moving-average
// smoothing (window 3); plateaus count once, at their center. The last pair
// is used because late-episode oscillations are the settled ones.
std::pair<int, int> detect_period(const Vec& signal);

struct FloquetReport {
  int t1 = 0, t2 = 0;  // the sequence covers steps [t1, t2)
  Mat monodromy;       // Phi after composing (I + dt*A_t) over the window
  std::vector<Complex> multipliers;  // eigenvalues of the monodromy matrix
  std::vector<Complex> exponents;    // ln(lambda)/((t2-t1)*dt), principal branch
  double dt = 1.0;
  bool zero_multiplier_warning = false;  // a multiplier was 0; exponent Re = -inf
};

// a_seq holds A_t for t in [t1, t1 + a_seq.size()).
FloquetReport floquet(const std::vector<Mat>& a_seq, double dt = 1.0, int t1 = 0);

struct SweepSpec {
  std::vector<std::size_t> dims;  // 1 or 2 observation indices to sweep
  std::vector<std::pair<double, double>> ranges;  // per swept dim
  std::size_t resolution = 32;                    // samples per axis
  int every = 10;                                 // evaluate every k-th step
};

struct ContourGrid {
  int t = 0;
  std::vector<std::size_t> dims;
  std::vector<Vec> axes;  // sample values per swept dim
  // Row-major over the grid: cell (i, j) = rho at axes[0][i], axes[1][j];
  // one row for 1-d sweeps.
  Mat rho;
  Mat im_max;
  Vec anchor_state;  // the recorded observation the sweep substitutes into
  // Points on the rho = 1 level set, linearly interpolated on grid edges.
  // For 1-d sweeps the second coordinate is 0.
  std::vector<std::pair<double, double>> rho_one_contour;
};

// For every `spec.every`-th trajectory step, evaluates the dynamics net on
// the recorded observation with the swept components substituted over the
// grid.
std::vector<ContourGrid> stability_contour(const MlpParams& dynamics, const Trajectory& traj,
                                           const SweepSpec& spec);

}  // namespace salsa
