#include "salsa/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "salsa/errors.hpp"

namespace salsa {

namespace {

constexpr double kImagEps = 1e-9;  // |Im| below this counts as a real spectrum

using Cd = std::complex<double>;

}  // namespace

std::string stability_class_name(StabilityClass c) {
  switch (c) {
    case StabilityClass::stable_nonoscillatory: return "stable_nonoscillatory";
    case StabilityClass::stable_damped_oscillation: return "stable_damped_oscillation";
    case StabilityClass::unstable: return "unstable";
  }
  throw std::invalid_argument("stability_class_name: unknown enum value");
}

SpectralReport spectral_report(const Mat& a) {
  SpectralReport r;
  r.eigenvalues = eigenvalues(a);
  for (const Complex& l : r.eigenvalues) {
    r.rho = std::max(r.rho, std::abs(l));
    r.im_max = std::max(r.im_max, std::fabs(l.imag()));
  }
  if (r.rho > 1.0)
    r.classification = StabilityClass::unstable;
  else if (r.im_max > kImagEps)
    r.classification = StabilityClass::stable_damped_oscillation;
  else
    r.classification = StabilityClass::stable_nonoscillatory;
  r.strictly_stable = r.rho < 1.0;

  Mat update = a;
  for (std::size_t i = 0; i < a.rows(); ++i) update(i, i) += 1.0;
  r.update_eigenvalues = eigenvalues(update);
  return r;
}

double normality_defect(const Mat& a) {
  check_square(a, "normality_defect");
  if (!a.all_finite())
    throw std::invalid_argument("normality_defect: matrix has non-finite entries");
  Mat aat, ata, at;
  matmul_bt(a, a, aat);  // A A^T
  transpose_into(a, at);
  matmul_bt(at, at, ata);  // A^T A
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double d = aat(i, j) - ata(i, j);
      s += d * d;
    }
  return std::sqrt(s);
}

namespace {

// Dense complex LU with partial pivoting; used to form resolvent inverses
// explicitly (dims are <= 64, so the O(n^3) inverse is cheap and keeps the
// power iteration below to plain matrix-vector products).
struct ComplexLu {
  std::size_t n = 0;
  std::vector<Cd> lu;  // row-major
  std::vector<std::size_t> piv;

  bool factor() {
    piv.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(lu[k * n + k]);
      for (std::size_t i = k + 1; i < n; ++i) {
        const double v = std::abs(lu[i * n + k]);
        if (v > best) {
          best = v;
          p = i;
        }
      }
      if (best == 0.0) return false;
      piv[k] = p;
      if (p != k)
        for (std::size_t j = 0; j < n; ++j) std::swap(lu[k * n + j], lu[p * n + j]);
      const Cd inv_pivot = 1.0 / lu[k * n + k];
      for (std::size_t i = k + 1; i < n; ++i) {
        const Cd f = lu[i * n + k] * inv_pivot;
        lu[i * n + k] = f;
        for (std::size_t j = k + 1; j < n; ++j) lu[i * n + j] -= f * lu[k * n + j];
      }
    }
    return true;
  }

  void solve(std::vector<Cd>& b) const {
    for (std::size_t k = 0; k < n; ++k) {
      if (piv[k] != k) std::swap(b[k], b[piv[k]]);
      for (std::size_t i = k + 1; i < n; ++i) b[i] -= lu[i * n + k] * b[k];
    }
    for (std::size_t k = n; k-- > 0;) {
      for (std::size_t j = k + 1; j < n; ++j) b[k] -= lu[k * n + j] * b[j];
      b[k] /= lu[k * n + k];
    }
  }
};

double vec_norm(const std::vector<Cd>& v) {
  double s = 0.0;
  for (const Cd& x : v) s += std::norm(x);
  return std::sqrt(s);
}

// Largest singular value of a dense complex matrix by power iteration on
// M^H M. Two deterministic starts (all-ones and alternating signs) guard
// against a start that is orthogonal to the top singular vector.
double sigma_max(const std::vector<Cd>& m, std::size_t n) {
  std::vector<Cd> v(n), u(n), w(n);
  double best = 0.0;
  for (int start = 0; start < 2; ++start) {
    for (std::size_t i = 0; i < n; ++i)
      v[i] = start == 0 ? Cd(1.0, 0.0) : Cd(i % 2 ? -1.0 : 1.0, 0.0);
    const double vn = vec_norm(v);
    for (Cd& x : v) x /= vn;
    double s = 0.0, prev = -1.0;
    for (int it = 0; it < 200; ++it) {
      for (std::size_t i = 0; i < n; ++i) {  // u = M v
        Cd acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) acc += m[i * n + j] * v[j];
        u[i] = acc;
      }
      s = vec_norm(u);
      if (s == 0.0) break;
      for (std::size_t j = 0; j < n; ++j) {  // w = M^H u
        Cd acc(0.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) acc += std::conj(m[i * n + j]) * u[i];
        w[j] = acc;
      }
      const double wn = vec_norm(w);
      if (wn == 0.0) break;
      for (std::size_t j = 0; j < n; ++j) v[j] = w[j] / wn;
      if (std::fabs(s - prev) <= 1e-12 * std::max(1.0, s)) break;
      prev = s;
    }
    best = std::max(best, s);
  }
  return best;
}

// (|z|-1) * ||(zI-A)^-1||_2 at z = (1 + 10^x) e^{i theta} for `standard`;
// paper_literal divides instead of multiplying.
double kreiss_objective(const Mat& a, double x, double theta, KreissMode mode) {
  const std::size_t n = a.rows();
  const double r = 1.0 + std::pow(10.0, x);
  const Cd z = std::polar(r, theta);

  ComplexLu lu;
  lu.n = n;
  lu.lu.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) lu.lu[i * n + j] = (i == j ? z : Cd(0.0, 0.0)) - a(i, j);
  if (!lu.factor())
    throw numeric_error("kreiss_constant: resolvent is singular at |z| = " + std::to_string(r));

  std::vector<Cd> resolvent(n * n);
  std::vector<Cd> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(col.begin(), col.end(), Cd(0.0, 0.0));
    col[j] = Cd(1.0, 0.0);
    lu.solve(col);
    for (std::size_t i = 0; i < n; ++i) resolvent[i * n + j] = col[i];
  }

  const double sig = sigma_max(resolvent, n);
  const double gap = r - 1.0;
  if (mode == KreissMode::standard) return gap * sig;
  return sig == 0.0 ? 0.0 : gap / sig;
}

}  // namespace

double kreiss_constant(const Mat& a, KreissMode mode, const KreissSearch& search) {
  check_square(a, "kreiss_constant");
  if (!a.all_finite())
    throw std::invalid_argument("kreiss_constant: matrix has non-finite entries");
  if (search.radii < 2 || search.angles < 4 || search.refine_rounds < 0 ||
      !(search.max_radius > 1.0))
    throw std::invalid_argument(
        "kreiss_constant: search needs radii >= 2, angles >= 4, refine_rounds >= 0, "
        "max_radius > 1");

  double rho = 0.0;
  for (const Complex& l : eigenvalues(a)) rho = std::max(rho, std::abs(l));
  if (rho >= 1.0)
    throw std::invalid_argument("kreiss_constant: spectral radius " + std::to_string(rho) +
                                " >= 1; the transient growth bound needs a stable matrix");

  const double x_min = -6.0;
  const double x_max = std::log10(search.max_radius - 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  double best = -std::numeric_limits<double>::infinity();
  double best_x = x_max, best_theta = 0.0;
  auto consider = [&](double x, double theta) {
    const double v = kreiss_objective(a, x, theta, mode);
    if (v > best) {
      best = v;
      best_x = x;
      best_theta = theta;
    }
  };

  for (int j = 0; j < search.radii; ++j) {
    const double x = x_min + (x_max - x_min) * j / (search.radii - 1);
    for (int k = 0; k < search.angles; ++k) consider(x, two_pi * k / search.angles);
  }

  double dx = (x_max - x_min) / (search.radii - 1);
  double dtheta = two_pi / search.angles;
  for (int round = 0; round < search.refine_rounds; ++round) {
    dx *= 0.5;
    dtheta *= 0.5;
    const double cx = best_x, ct = best_theta;
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j) {
        const double x = std::clamp(cx + i * dx, x_min, x_max);
        consider(x, ct + j * dtheta);
      }
  }

  return mode == KreissMode::standard ? std::max(1.0, best) : best;
}

std::vector<KreissStepReport> kreiss_trace(const std::vector<Mat>& a_seq,
                                           const KreissTraceConfig& cfg) {
  std::vector<KreissStepReport> out;
  out.reserve(a_seq.size());
  for (std::size_t t = 0; t < a_seq.size(); ++t) {
    const Mat& a = a_seq[t];
    KreissStepReport rep;
    rep.t = static_cast<int>(t);
    double rho = 0.0;
    for (const Complex& l : eigenvalues(a)) rho = std::max(rho, std::abs(l));
    rep.rho = rho;
    rep.normality_defect = normality_defect(a);
    rep.computed = rho < 1.0 && rep.normality_defect > cfg.defect_eps;
    if (rep.computed) rep.kreiss = kreiss_constant(a, cfg.mode, cfg.search);
    out.push_back(std::move(rep));
  }
  return out;
}

std::pair<int, int> detect_period(const Vec& signal) {
  const std::size_t n = signal.size();
  if (n < 3)
    throw std::invalid_argument("detect_period: need at least 3 samples, got " +
                                std::to_string(n));
  for (double v : signal)
    if (!std::isfinite(v))
      throw std::invalid_argument("detect_period: signal has non-finite samples");

  // Centered moving average, window 3; endpoints average what is available.
  Vec smooth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 < n ? i + 1 : n - 1;
    double s = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) s += signal[j];
    smooth[i] = s / (hi - lo + 1);
  }

  // Local maxima; flat tops count once, at the plateau center.
  std::vector<int> maxima;
  std::size_t i = 1;
  while (i + 1 < n) {
    if (smooth[i] <= smooth[i - 1]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && smooth[j + 1] == smooth[i]) ++j;
    if (j + 1 < n && smooth[j + 1] < smooth[i]) maxima.push_back(static_cast<int>((i + j) / 2));
    i = j + 1;
  }

  if (maxima.size() < 2)
    throw no_period_error("detect_period: found " + std::to_string(maxima.size()) +
                          " local maxima after smoothing; need at least 2");
  return {maxima[maxima.size() - 2], maxima.back()};
}

FloquetReport floquet(const std::vector<Mat>& a_seq, double dt, int t1) {
  if (a_seq.empty()) throw std::invalid_argument("floquet: empty matrix sequence");
  if (!std::isfinite(dt) || dt <= 0.0)
    throw std::invalid_argument("floquet: dt must be positive and finite");
  const std::size_t n = a_seq.front().rows();
  for (const Mat& a : a_seq) {
    check_square(a, "floquet");
    if (a.rows() != n)
      throw std::invalid_argument("floquet: matrix dims change mid-sequence (" +
                                  std::to_string(a.rows()) + " vs " + std::to_string(n) + ")");
    if (!a.all_finite()) throw std::invalid_argument("floquet: matrix has non-finite entries");
  }

  Mat phi = Mat::identity(n);
  Mat step(n, n), next;
  for (const Mat& a : a_seq) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) step(i, j) = (i == j ? 1.0 : 0.0) + dt * a(i, j);
    matmul(step, phi, next);
    std::swap(phi, next);
  }

  FloquetReport rep;
  rep.t1 = t1;
  rep.t2 = t1 + static_cast<int>(a_seq.size());
  rep.dt = dt;
  rep.monodromy = phi;
  rep.multipliers = eigenvalues(phi);
  const double window = static_cast<double>(a_seq.size()) * dt;
  rep.exponents.reserve(rep.multipliers.size());
  for (const Complex& l : rep.multipliers) {
    if (std::abs(l) < 1e-300) {
      rep.exponents.emplace_back(-std::numeric_limits<double>::infinity(), 0.0);
      rep.zero_multiplier_warning = true;
    } else {
      rep.exponents.push_back(std::log(l) / window);
    }
  }
  return rep;
}

namespace {

void append_crossing(std::vector<std::pair<double, double>>& out, double fixed, double a0,
                     double a1, double r0, double r1, bool fixed_is_first) {
  // Linear interpolation of the rho = 1 crossing on one grid edge.
  const double f = (1.0 - r0) / (r1 - r0);
  const double pos = a0 + f * (a1 - a0);
  if (fixed_is_first)
    out.emplace_back(fixed, pos);
  else
    out.emplace_back(pos, fixed);
}

}  // namespace

std::vector<ContourGrid> stability_contour(const MlpParams& dynamics, const Trajectory& traj,
                                           const SweepSpec& spec) {
  if (traj.steps.empty()) throw std::invalid_argument("stability_contour: empty trajectory");
  const std::size_t obs_dim = traj.steps.front().observation.size();
  if (dynamics.empty() || dynamics.input_dim() != obs_dim)
    throw std::invalid_argument("stability_contour: dynamics net expects input dim " +
                                std::to_string(dynamics.empty() ? 0 : dynamics.input_dim()) +
                                " but trajectory observations have dim " +
                                std::to_string(obs_dim));
  const std::size_t ndims = spec.dims.size();
  if (ndims < 1 || ndims > 2)
    throw std::invalid_argument("stability_contour: sweep over 1 or 2 observation dims, got " +
                                std::to_string(ndims));
  if (spec.ranges.size() != ndims)
    throw std::invalid_argument("stability_contour: dims/ranges size mismatch");
  if (ndims == 2 && spec.dims[0] == spec.dims[1])
    throw std::invalid_argument("stability_contour: swept dims must be distinct");
  for (std::size_t d = 0; d < ndims; ++d) {
    if (spec.dims[d] >= obs_dim)
      throw std::invalid_argument("stability_contour: dim " + std::to_string(spec.dims[d]) +
                                  " out of range for observation dim " + std::to_string(obs_dim));
    const auto& [lo, hi] = spec.ranges[d];
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
      throw std::invalid_argument("stability_contour: range for dim " +
                                  std::to_string(spec.dims[d]) + " must satisfy lo < hi");
  }
  if (spec.resolution < 2)
    throw std::invalid_argument("stability_contour: resolution must be >= 2");
  if (spec.every < 1) throw std::invalid_argument("stability_contour: every must be >= 1");

  std::vector<Vec> axes(ndims);
  for (std::size_t d = 0; d < ndims; ++d) {
    const auto& [lo, hi] = spec.ranges[d];
    axes[d].resize(spec.resolution);
    for (std::size_t i = 0; i < spec.resolution; ++i)
      axes[d][i] = lo + (hi - lo) * i / (spec.resolution - 1);
  }

  std::vector<ContourGrid> frames;
  Vec state;
  for (std::size_t s = 0; s < traj.steps.size(); s += static_cast<std::size_t>(spec.every)) {
    const TrajectoryStep& at = traj.steps[s];
    ContourGrid g;
    g.t = at.t;
    g.dims = spec.dims;
    g.axes = axes;
    g.anchor_state = at.observation;

    const std::size_t r0 = ndims == 1 ? 1 : spec.resolution;
    const std::size_t r1 = spec.resolution;
    g.rho = Mat(r0, r1);
    g.im_max = Mat(r0, r1);
    for (std::size_t i = 0; i < r0; ++i)
      for (std::size_t j = 0; j < r1; ++j) {
        state = at.observation;
        if (ndims == 1) {
          state[spec.dims[0]] = axes[0][j];
        } else {
          state[spec.dims[0]] = axes[0][i];
          state[spec.dims[1]] = axes[1][j];
        }
        const Mat a = dynamics_matrix(dynamics, state);
        double rho = 0.0, im = 0.0;
        for (const Complex& l : eigenvalues(a)) {
          rho = std::max(rho, std::abs(l));
          im = std::max(im, std::fabs(l.imag()));
        }
        g.rho(i, j) = rho;
        g.im_max(i, j) = im;
      }

    if (ndims == 1) {
      for (std::size_t j = 0; j + 1 < r1; ++j) {
        const double a = g.rho(0, j) - 1.0, b = g.rho(0, j + 1) - 1.0;
        if (a == 0.0) g.rho_one_contour.emplace_back(axes[0][j], 0.0);
        if (a * b < 0.0)
          append_crossing(g.rho_one_contour, 0.0, axes[0][j], axes[0][j + 1], g.rho(0, j),
                          g.rho(0, j + 1), false);
      }
      if (g.rho(0, r1 - 1) == 1.0) g.rho_one_contour.emplace_back(axes[0][r1 - 1], 0.0);
    } else {
      for (std::size_t i = 0; i < r0; ++i)
        for (std::size_t j = 0; j < r1; ++j) {
          if (g.rho(i, j) == 1.0) {
            g.rho_one_contour.emplace_back(axes[0][i], axes[1][j]);
            continue;
          }
          const double a = g.rho(i, j) - 1.0;
          if (j + 1 < r1) {
            const double b = g.rho(i, j + 1) - 1.0;
            if (a * b < 0.0)
              append_crossing(g.rho_one_contour, axes[0][i], axes[1][j], axes[1][j + 1],
                              g.rho(i, j), g.rho(i, j + 1), true);
          }
          if (i + 1 < r0) {
            const double b = g.rho(i + 1, j) - 1.0;
            if (a * b < 0.0)
              append_crossing(g.rho_one_contour, axes[1][j], axes[0][i], axes[0][i + 1],
                              g.rho(i, j), g.rho(i + 1, j), false);
          }
        }
    }

    frames.push_back(std::move(g));
  }
  return frames;
}

}  // namespace salsa
