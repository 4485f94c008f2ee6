#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/stability.hpp"

namespace salsa {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Parlett-Reinsch balancing: diagonal similarity with radix-power scales to
// even out row/column norms. Exact in floating point (scales are powers of
// two), so eigenvalues are untouched while conditioning improves.
void balance(Mat& a) {
  const std::size_t n = a.rows();
  const double radix = 2.0, sq = radix * radix;
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::fabs(a(j, i));
        r += std::fabs(a(i, j));
      }
      if (c == 0.0 || r == 0.0) continue;
      const double s = c + r;
      double f = 1.0, g = r / radix;
      while (c < g) {
        f *= radix;
        c *= sq;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sq;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        const double ginv = 1.0 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= ginv;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

// Householder reduction to upper Hessenberg form, in place.
void hessenberg(Mat& a) {
  const std::size_t n = a.rows();
  Vec v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double xnorm2 = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) xnorm2 += a(i, k) * a(i, k);
    if (xnorm2 == 0.0) continue;
    const double xnorm = std::sqrt(xnorm2);
    const double x0 = a(k + 1, k);
    const double alpha = x0 >= 0.0 ? -xnorm : xnorm;
    // v = x - alpha e1; H = I - 2 v v^T / (v^T v)
    double vtv = xnorm2 - 2.0 * alpha * x0 + alpha * alpha;
    if (vtv == 0.0) continue;
    v[k + 1] = x0 - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = a(i, k);
    const double beta = 2.0 / vtv;

    // A <- H A (rows k+1.., all columns)
    for (std::size_t j = 0; j < n; ++j) {
      double w = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) w += v[i] * a(i, j);
      w *= beta;
      for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= v[i] * w;
    }
    // A <- A H (columns k+1.., all rows)
    for (std::size_t i = 0; i < n; ++i) {
      double w = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) w += a(i, j) * v[j];
      w *= beta;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= w * v[j];
    }
    a(k + 1, k) = alpha;
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
  }
}

using Cd = std::complex<double>;

struct CMat {
  std::size_t n = 0;
  std::vector<Cd> d;
  explicit CMat(std::size_t n_) : n(n_), d(n_ * n_) {}
  Cd& at(std::size_t i, std::size_t j) { return d[i * n + j]; }
  Cd at(std::size_t i, std::size_t j) const { return d[i * n + j]; }
};

// Roots of z^2 - tr z + det, avoiding cancellation in the larger root.
std::pair<Cd, Cd> quadratic_roots(Cd tr, Cd det) {
  const Cd disc = std::sqrt(tr * tr - 4.0 * det);
  const Cd s1 = tr + disc, s2 = tr - disc;
  const Cd big = std::abs(s1) >= std::abs(s2) ? s1 : s2;
  if (big == Cd(0.0, 0.0)) return {Cd(0.0, 0.0), Cd(0.0, 0.0)};
  const Cd l1 = big / 2.0;
  return {l1, det / l1};
}

std::string matrix_string(const Mat& a) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (std::size_t i = 0; i < a.rows(); ++i) {
    os << (i ? "; " : "");
    for (std::size_t j = 0; j < a.cols(); ++j) os << (j ? " " : "") << a(i, j);
  }
  os << "]";
  return os.str();
}

// Complex single-shift QR with deflation on an upper Hessenberg matrix.
// Windows [l, m) that decouple are iterated independently; couplings outside
// an unreduced window never influence its eigenvalues.
std::vector<Cd> qr_eigenvalues(CMat h, const Mat& original) {
  const std::size_t n = h.n;
  std::vector<Cd> eig;
  eig.reserve(n);
  std::size_t m = n;
  int iter = 0;
  while (m > 0) {
    // Find the start l of the trailing unreduced block, zeroing negligible
    // subdiagonals on the way.
    std::size_t l = m - 1;
    while (l > 0) {
      const double s = std::abs(h.at(l - 1, l - 1)) + std::abs(h.at(l, l));
      const double thresh = kEps * (s == 0.0 ? 1.0 : s) + 1e-300;
      if (std::abs(h.at(l, l - 1)) <= thresh) {
        h.at(l, l - 1) = 0.0;
        break;
      }
      --l;
    }
    if (l == m - 1) {  // 1x1 block deflates
      eig.push_back(h.at(m - 1, m - 1));
      --m;
      iter = 0;
      continue;
    }
    if (l == m - 2) {  // 2x2 block: closed form
      const Cd a = h.at(l, l), b = h.at(l, l + 1), c = h.at(l + 1, l), d = h.at(l + 1, l + 1);
      auto [l1, l2] = quadratic_roots(a + d, a * d - b * c);
      eig.push_back(l1);
      eig.push_back(l2);
      m -= 2;
      iter = 0;
      continue;
    }
    if (++iter > 40)
      throw numeric_error("eigenvalues: QR iteration did not converge for matrix " +
                          matrix_string(original));

    // Wilkinson shift from the trailing 2x2; occasionally an exceptional
    // shift to break symmetry-induced stalls.
    Cd shift;
    if (iter % 12 == 0) {
      shift = Cd(std::abs(h.at(m - 1, m - 2)) + std::abs(h.at(m - 2, m - 3)), 0.0);
    } else {
      const Cd a = h.at(m - 2, m - 2), b = h.at(m - 2, m - 1);
      const Cd c = h.at(m - 1, m - 2), d = h.at(m - 1, m - 1);
      auto [r1, r2] = quadratic_roots(a + d, a * d - b * c);
      shift = std::abs(r1 - d) <= std::abs(r2 - d) ? r1 : r2;
    }

    // Explicit shifted QR sweep on the window [l, m):
    // H - sigma I = Q R via Givens, then H <- R Q + sigma I.
    for (std::size_t i = l; i < m; ++i) h.at(i, i) -= shift;
    const std::size_t rot_count = m - 1 - l;
    std::vector<Cd> gc(rot_count), gs(rot_count);
    for (std::size_t i = l; i + 1 < m; ++i) {
      const Cd x = h.at(i, i), y = h.at(i + 1, i);
      const double dnorm = std::hypot(std::abs(x), std::abs(y));
      Cd c(1.0, 0.0), s(0.0, 0.0);
      if (dnorm > 0.0) {
        c = x / dnorm;
        s = y / dnorm;
      }
      gc[i - l] = c;
      gs[i - l] = s;
      // Left-apply G^H to rows i, i+1 over columns i..m-1.
      for (std::size_t j = i; j < m; ++j) {
        const Cd u = h.at(i, j), v = h.at(i + 1, j);
        h.at(i, j) = std::conj(c) * u + std::conj(s) * v;
        h.at(i + 1, j) = -s * u + c * v;
      }
    }
    // Right-apply the adjoints: columns i, i+1 over rows l..i+1.
    for (std::size_t i = l; i + 1 < m; ++i) {
      const Cd c = gc[i - l], s = gs[i - l];
      for (std::size_t r = l; r <= i + 1; ++r) {
        const Cd p = h.at(r, i), q = h.at(r, i + 1);
        h.at(r, i) = p * c + q * s;
        h.at(r, i + 1) = p * (-std::conj(s)) + q * std::conj(c);
      }
    }
    for (std::size_t i = l; i < m; ++i) h.at(i, i) += shift;
  }
  return eig;
}

}  // namespace

std::vector<Complex> eigenvalues(const Mat& a) {
  check_square(a, "eigenvalues");
  if (a.rows() > 64)
    throw std::invalid_argument("eigenvalues: dimension " + std::to_string(a.rows()) +
                                " exceeds the supported maximum of 64");
  if (!a.all_finite()) throw std::invalid_argument("eigenvalues: matrix has non-finite entries");

  const std::size_t n = a.rows();
  std::vector<Complex> eig;
  if (n == 1) {
    eig = {Complex(a(0, 0), 0.0)};
  } else if (n == 2) {
    auto [l1, l2] = quadratic_roots(Cd(a(0, 0) + a(1, 1), 0.0),
                                    Cd(a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0), 0.0));
    eig = {l1, l2};
  } else {
    Mat work = a;
    balance(work);
    hessenberg(work);
    CMat h(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) h.at(i, j) = Cd(work(i, j), 0.0);
    eig = qr_eigenvalues(std::move(h), a);
  }

  std::sort(eig.begin(), eig.end(), [](const Complex& x, const Complex& y) {
    const double ax = std::abs(x), ay = std::abs(y);
    if (ax != ay) return ax > ay;
    if (x.real() != y.real()) return x.real() > y.real();
    return x.imag() > y.imag();
  });
  return eig;
}

}  // namespace salsa
