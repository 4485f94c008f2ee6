#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace salsa {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. The single storage type shared by the
// networks and the stability analyses. Kept deliberately small: the hot
// kernels below are free functions written so the compiler can vectorize
// their inner loops.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void assign(std::size_t rows, std::size_t cols, double value = 0.0) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, value);
  }

  // Resize without filling: contents are unspecified. For outputs that are
  // fully overwritten anyway; keeps steady-state training allocation-free.
  void reshape(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.resize(rows * cols);
  }

  void fill(double value) { data_.assign(data_.size(), value); }

  Vec row_vec(std::size_t i) const { return Vec(row(i), row(i) + cols_); }
  void set_row(std::size_t i, const Vec& v) {
    for (std::size_t j = 0; j < cols_; ++j) (*this)(i, j) = v[j];
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

inline void check_square(const Mat& a, const char* who) {
  if (a.rows() != a.cols() || a.rows() == 0)
    throw std::invalid_argument(std::string(who) + ": expected a non-empty square matrix, got " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
}

// out = a * b. Overwrites out (reusing its storage when shapes match).
void matmul(const Mat& a, const Mat& b, Mat& out);

// out = a * b^T. Used for dX = dPre * W^T style backprop products.
void matmul_bt(const Mat& a, const Mat& b, Mat& out);

// out += a^T * b. Used for weight gradients dW += X^T * dPre.
void matmul_at_acc(const Mat& a, const Mat& b, Mat& out);

Mat transpose(const Mat& a);
void transpose_into(const Mat& a, Mat& t);

// y = a * x for a square or rectangular a (rows x cols) and x of length cols.
Vec mat_vec(const Mat& a, const Vec& x);

double frobenius_norm(const Mat& a);
double max_abs(const Mat& a);

// Elementwise tanh over a contiguous array. Branch-free polynomial/exp
// implementation that the compiler can vectorize; matches std::tanh to a few
// ulp (absolute error below 1e-14) and preserves NaN.
void tanh_inplace(double* x, std::size_t n);

inline double fast_tanh(double x) {
  tanh_inplace(&x, 1);
  return x;
}

inline double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace salsa
