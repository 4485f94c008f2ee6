#include "salsa/mat.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace salsa {

namespace {

void check_mul(std::size_t ak, std::size_t bk, const char* who) {
  if (ak != bk)
    throw std::invalid_argument(std::string(who) + ": inner dimensions differ (" +
                                std::to_string(ak) + " vs " + std::to_string(bk) + ")");
}

// One k-panel of out(+)=a*b restricted to a-columns/b-rows [p0, p1). Two
// a-rows per pass share the b-row loads, and the panel k is unrolled by four
// to keep several FMA chains in flight. Plain loops on purpose: the compiler
// turns them into the wide form by itself.
template <bool FIRST>
void mm_panel(const Mat& a, const Mat& b, Mat& out, std::size_t p0, std::size_t p1) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const double* __restrict__ a0 = a.row(i);
    const double* __restrict__ a1 = a0 + k;
    double* __restrict__ d0 = out.row(i);
    double* __restrict__ d1 = d0 + m;
    if (FIRST)
      for (std::size_t j = 0; j < m; ++j) {
        d0[j] = 0.0;
        d1[j] = 0.0;
      }
    std::size_t p = p0;
    for (; p + 4 <= p1; p += 4) {
      const double s00 = a0[p], s01 = a0[p + 1], s02 = a0[p + 2], s03 = a0[p + 3];
      const double s10 = a1[p], s11 = a1[p + 1], s12 = a1[p + 2], s13 = a1[p + 3];
      const double* __restrict__ b0 = b.row(p);
      const double* __restrict__ b1 = b0 + m;
      const double* __restrict__ b2 = b1 + m;
      const double* __restrict__ b3 = b2 + m;
      for (std::size_t j = 0; j < m; ++j) {
        const double bb0 = b0[j], bb1 = b1[j], bb2 = b2[j], bb3 = b3[j];
        d0[j] += s00 * bb0 + s01 * bb1 + s02 * bb2 + s03 * bb3;
        d1[j] += s10 * bb0 + s11 * bb1 + s12 * bb2 + s13 * bb3;
      }
    }
    for (; p < p1; ++p) {
      const double s0 = a0[p], s1 = a1[p];
      const double* __restrict__ brow = b.row(p);
      for (std::size_t j = 0; j < m; ++j) {
        d0[j] += s0 * brow[j];
        d1[j] += s1 * brow[j];
      }
    }
  }
  if (i < n) {
    const double* __restrict__ arow = a.row(i);
    double* __restrict__ dst = out.row(i);
    if (FIRST)
      for (std::size_t j = 0; j < m; ++j) dst[j] = 0.0;
    std::size_t p = p0;
    for (; p + 4 <= p1; p += 4) {
      const double s0 = arow[p], s1 = arow[p + 1], s2 = arow[p + 2], s3 = arow[p + 3];
      const double* __restrict__ b0 = b.row(p);
      const double* __restrict__ b1 = b0 + m;
      const double* __restrict__ b2 = b1 + m;
      const double* __restrict__ b3 = b2 + m;
      for (std::size_t j = 0; j < m; ++j)
        dst[j] += s0 * b0[j] + s1 * b1[j] + s2 * b2[j] + s3 * b3[j];
    }
    for (; p < p1; ++p) {
      const double s = arow[p];
      const double* __restrict__ brow = b.row(p);
      for (std::size_t j = 0; j < m; ++j) dst[j] += s * brow[j];
    }
  }
}

// out = a*b (ACC=false) or out += a*b (ACC=true), with b split into k-panels
// sized to stay L1-resident when the whole of b does not fit.
template <bool ACC>
void mm_core(const Mat& a, const Mat& b, Mat& out) {
  const std::size_t k = a.cols(), m = b.cols();
  std::size_t panel = k;
  if (k * m * sizeof(double) > 32768) {
    panel = (24576 / (m * sizeof(double))) & ~std::size_t{3};
    if (panel < 8) panel = 8;
  }
  for (std::size_t p0 = 0; p0 < k; p0 += panel) {
    const std::size_t p1 = std::min(p0 + panel, k);
    if (p0 == 0 && !ACC)
      mm_panel<true>(a, b, out, p0, p1);
    else
      mm_panel<false>(a, b, out, p0, p1);
  }
}

// Eight partial sums so the reduction vectorizes without reassociation
// licenses from the compiler.
double dot(const double* __restrict__ x, const double* __restrict__ y, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t p = 0;
  for (; p + 8 <= n; p += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += x[p + l] * y[p + l];
  double s = ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
  for (; p < n; ++p) s += x[p] * y[p];
  return s;
}

// The axpy-style core above degenerates when the output is only a few
// columns wide; narrow products run as per-row dots against b^T instead.
template <bool ACC>
void mm_narrow(const Mat& a, const Mat& bt, Mat& out) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* __restrict__ arow = a.row(i);
    double* __restrict__ dst = out.row(i);
    for (std::size_t j = 0; j < bt.rows(); ++j) {
      const double v = dot(arow, bt.row(j), a.cols());
      dst[j] = ACC ? dst[j] + v : v;
    }
  }
}

constexpr std::size_t kNarrow = 8;

}  // namespace

void matmul(const Mat& a, const Mat& b, Mat& out) {
  check_mul(a.cols(), b.rows(), "matmul");
  out.reshape(a.rows(), b.cols());
  if (b.cols() <= kNarrow && a.cols() >= 16) {
    thread_local Mat bt;
    transpose_into(b, bt);
    mm_narrow<false>(a, bt, out);
  } else {
    mm_core<false>(a, b, out);
  }
}

void matmul_bt(const Mat& a, const Mat& b, Mat& out) {
  check_mul(a.cols(), b.cols(), "matmul_bt");
  out.reshape(a.rows(), b.rows());
  if (b.rows() <= kNarrow && a.cols() >= 16) {
    mm_narrow<false>(a, b, out);
  } else {
    thread_local Mat bt;
    transpose_into(b, bt);
    mm_core<false>(a, bt, out);
  }
}

void matmul_at_acc(const Mat& a, const Mat& b, Mat& out) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at_acc: row counts differ");
  if (out.rows() != a.cols() || out.cols() != b.cols())
    throw std::invalid_argument("matmul_at_acc: output shape mismatch");
  if (b.cols() <= kNarrow && a.rows() >= 16) {
    // out^T += b^T * a keeps the long batch dimension innermost.
    thread_local Mat bt, tmp;
    transpose_into(b, bt);
    matmul(bt, a, tmp);
    for (std::size_t j = 0; j < out.cols(); ++j)
      for (std::size_t p = 0; p < out.rows(); ++p) out(p, j) += tmp(j, p);
  } else {
    thread_local Mat at;
    transpose_into(a, at);
    mm_core<true>(at, b, out);
  }
}

void transpose_into(const Mat& a, Mat& t) {
  // i innermost: writes land contiguously in t, and the strip of a rows
  // stays cached across the j sweep.
  t.reshape(a.cols(), a.rows());
  const std::size_t bs = 32;
  for (std::size_t i0 = 0; i0 < a.rows(); i0 += bs) {
    const std::size_t imax = std::min(i0 + bs, a.rows());
    for (std::size_t j = 0; j < a.cols(); ++j) {
      double* __restrict__ trow = t.row(j);
      for (std::size_t i = i0; i < imax; ++i) trow[i] = a(i, j);
    }
  }
}

Mat transpose(const Mat& a) {
  Mat t;
  transpose_into(a, t);
  return t;
}

Vec mat_vec(const Mat& a, const Vec& x) {
  check_mul(a.cols(), x.size(), "mat_vec");
  Vec y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* __restrict__ arow = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += arow[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double frobenius_norm(const Mat& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return std::sqrt(s);
}

double max_abs(const Mat& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

namespace {

// exp(r) for |r| <= 0.5*ln2 as a degree-11 Taylor polynomial. The truncation
// error is below 9e-15 relative, which keeps the assembled tanh within a few
// ulp of the libm value.
inline double exp_poly(double r) {
  const double c2 = 1.0 / 2.0, c3 = 1.0 / 6.0, c4 = 1.0 / 24.0, c5 = 1.0 / 120.0,
               c6 = 1.0 / 720.0, c7 = 1.0 / 5040.0, c8 = 1.0 / 40320.0, c9 = 1.0 / 362880.0,
               c10 = 1.0 / 3628800.0, c11 = 1.0 / 39916800.0;
  double p = c11;
  p = p * r + c10;
  p = p * r + c9;
  p = p * r + c8;
  p = p * r + c7;
  p = p * r + c6;
  p = p * r + c5;
  p = p * r + c4;
  p = p * r + c3;
  p = p * r + c2;
  p = p * r + 1.0;
  p = p * r + 1.0;
  return p;
}

}  // namespace

void tanh_inplace(double* x, std::size_t n) {
  // tanh(|x|) = 1 - 2/(exp(2|x|) + 1), restored to the input's sign.
  // exp is computed as 2^k * exp(r) with round-to-nearest k and a polynomial
  // for the reduced argument; everything below is branch-free so the loop
  // vectorizes (the build adds -fno-trapping-math, which the if-converter
  // needs for the float selects).
  const double log2e = 1.4426950408889634074;
  const double ln2_hi = 6.93145751953125e-01;
  const double ln2_lo = 1.42860682030941723212e-06;
  const double round_magic = 6755399441055744.0;  // 1.5 * 2^52
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    double a = std::fabs(xi);
    a = a < 20.0 ? a : 20.0;  // tanh saturates to 1.0 in double precision
    a = (xi == xi) ? a : 0.0;  // keep the int conversion below defined on NaN
    const double t = 2.0 * a;
    const double kd = (t * log2e + round_magic) - round_magic;
    const double r = (t - kd * ln2_hi) - kd * ln2_lo;
    const double scale =
        std::bit_cast<double>(static_cast<std::uint64_t>(1023 + static_cast<std::int64_t>(kd))
                              << 52);
    const double e2a = exp_poly(r) * scale;
    const double th = 1.0 - 2.0 / (e2a + 1.0);
    const std::uint64_t sign = std::bit_cast<std::uint64_t>(xi) & 0x8000000000000000ull;
    const double signed_th = std::bit_cast<double>(std::bit_cast<std::uint64_t>(th) | sign);
    x[i] = (xi == xi) ? signed_th : xi;  // preserve NaN
  }
}

}  // namespace salsa
