#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "salsa/mlp.hpp"
#include "salsa/rng.hpp"

using namespace salsa;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Scalar reference product, kept deliberately naive.
Mat naive_matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

double loss_against(const MlpParams& p, const Mat& x, const Mat& c) {
  Mat y = mlp_forward(p, x);
  double l = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) l += c.data()[i] * y.data()[i];
  return l;
}

double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max({std::fabs(got), std::fabs(want), 1e-8});
}

}  // namespace

TEST_CASE("matmul matches the naive reference") {
  Rng rng(11);
  for (auto [n, k, m] : {std::tuple{1, 1, 1}, {3, 4, 5}, {17, 9, 31}, {64, 64, 64}}) {
    Mat a = random_mat(n, k, rng), b = random_mat(k, m, rng), c;
    matmul(a, b, c);
    Mat want = naive_matmul(a, b);
    for (std::size_t i = 0; i < c.size(); ++i)
      CHECK(c.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-13));
  }
}

TEST_CASE("matmul_bt and matmul_at_acc match transposed references") {
  Rng rng(12);
  Mat a = random_mat(7, 5, rng), b = random_mat(9, 5, rng), c;
  matmul_bt(a, b, c);
  Mat want = naive_matmul(a, transpose(b));
  for (std::size_t i = 0; i < c.size(); ++i)
    CHECK(c.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-13));

  Mat x = random_mat(6, 4, rng), g = random_mat(6, 3, rng);
  Mat acc(4, 3, 0.5);
  matmul_at_acc(x, g, acc);
  Mat want2 = naive_matmul(transpose(x), g);
  for (std::size_t i = 0; i < acc.size(); ++i)
    CHECK(acc.data()[i] == doctest::Approx(want2.data()[i] + 0.5).epsilon(1e-12));
}

TEST_CASE("shape mismatches are rejected") {
  Mat a(2, 3), b(4, 2), c;
  CHECK_THROWS_AS(matmul(a, b, c), std::invalid_argument);
  CHECK_THROWS_AS(mat_vec(a, Vec{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("tanh kernel tracks std::tanh and preserves NaN") {
  Rng rng(13);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(rng.uniform(-30.0, 30.0));
  for (double s : {0.0, 1e-12, -1e-12, 0.5, -0.5, 5.0, 19.0, 25.0, 700.0, -700.0}) xs.push_back(s);
  std::vector<double> ys = xs;
  tanh_inplace(ys.data(), ys.size());
  double max_err = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    max_err = std::max(max_err, std::fabs(ys[i] - std::tanh(xs[i])));
  CHECK(max_err < 1e-13);

  double inf = std::numeric_limits<double>::infinity();
  CHECK(fast_tanh(inf) == 1.0);
  CHECK(fast_tanh(-inf) == -1.0);
  CHECK(std::isnan(fast_tanh(std::numeric_limits<double>::quiet_NaN())));
}

TEST_CASE("rng is deterministic and stays in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng r(7);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += u;
  }
  CHECK(mean / 20000 == doctest::Approx(0.5).epsilon(0.02));
  double nm = 0.0, nv = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double x = r.normal();
    nm += x;
    nv += x * x;
  }
  CHECK(nm / 20000 == doctest::Approx(0.0).epsilon(0.05));
  CHECK(nv / 20000 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("forward pass matches a hand-unrolled two-layer computation") {
  // 2-2-1 net, tanh hidden, identity output scaled by 2.
  MlpParams p;
  DenseLayer l0;
  l0.weight = Mat(2, 2);
  l0.weight(0, 0) = 0.3;
  l0.weight(0, 1) = -0.2;
  l0.weight(1, 0) = 0.1;
  l0.weight(1, 1) = 0.4;
  l0.bias = {0.05, -0.1};
  l0.act = Activation::Tanh;
  DenseLayer l1;
  l1.weight = Mat(2, 1);
  l1.weight(0, 0) = 0.7;
  l1.weight(1, 0) = -0.6;
  l1.bias = {0.2};
  l1.act = Activation::Identity;
  l1.out_scale = 2.0;
  p.layers = {l0, l1};

  const double x0 = 0.9, x1 = -0.4;
  const double h0 = std::tanh(x0 * 0.3 + x1 * 0.1 + 0.05);
  const double h1 = std::tanh(x0 * -0.2 + x1 * 0.4 - 0.1);
  const double want = 2.0 * (h0 * 0.7 + h1 * -0.6 + 0.2);

  Vec y = mlp_forward(p, Vec{x0, x1});
  CHECK(y.size() == 1);
  CHECK(y[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("batched forward equals per-row forward bit for bit") {
  Rng rng(21);
  MlpParams p = make_mlp({3, 16, 16, 4}, Activation::Tanh, Activation::Identity, 1.0, rng);
  Mat x = random_mat(9, 3, rng, -2.0, 2.0);
  Mat y = mlp_forward(p, x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    Vec yi = mlp_forward(p, x.row_vec(i));
    for (std::size_t j = 0; j < y.cols(); ++j) CHECK(y(i, j) == yi[j]);
  }
}

TEST_CASE("init respects fan-in bounds and is seed-deterministic") {
  Rng a(5), b(5), c(6);
  MlpParams p1 = make_mlp({10, 20, 3}, Activation::Tanh, Activation::Identity, 1.0, a);
  MlpParams p2 = make_mlp({10, 20, 3}, Activation::Tanh, Activation::Identity, 1.0, b);
  MlpParams p3 = make_mlp({10, 20, 3}, Activation::Tanh, Activation::Identity, 1.0, c);
  CHECK(weights_hash(p1) == weights_hash(p2));
  CHECK(weights_hash(p1) != weights_hash(p3));
  const double bound0 = 1.0 / std::sqrt(10.0);
  for (std::size_t i = 0; i < p1.layers[0].weight.size(); ++i) {
    CHECK(std::fabs(p1.layers[0].weight.data()[i]) <= bound0);
  }
  const double bound1 = 1.0 / std::sqrt(20.0);
  for (std::size_t i = 0; i < p1.layers[1].weight.size(); ++i)
    CHECK(std::fabs(p1.layers[1].weight.data()[i]) <= bound1);
}

TEST_CASE("backward gradients match central finite differences") {
  Rng rng(31);
  // Shapes mirror the real networks: tanh hidden stack, identity output, and
  // one variant with the scaled-tanh output head used by the dynamics net.
  struct Case {
    std::vector<std::size_t> dims;
    Activation out;
    double scale;
  };
  for (const Case& cse : {Case{{3, 8, 3}, Activation::Identity, 1.0},
                          Case{{2, 8, 8, 4}, Activation::Identity, 1.0},
                          Case{{3, 10, 9}, Activation::Tanh, 2.0}}) {
    MlpParams p = make_mlp(cse.dims, Activation::Tanh, cse.out, cse.scale, rng);
    Mat x = random_mat(5, cse.dims.front(), rng, -1.5, 1.5);
    Mat c = random_mat(5, cse.dims.back(), rng);

    ForwardTrace trace;
    mlp_forward(p, x, &trace);
    MlpGrads g = mlp_backward(p, trace, c);

    const double h = 1e-5;
    int probes = 0;
    Rng pick(77);
    while (probes < 100) {
      const std::size_t li = pick.uniform_int(p.layers.size());
      DenseLayer& layer = p.layers[li];
      const bool use_bias = pick.uniform() < 0.2;
      if (use_bias) {
        const std::size_t j = pick.uniform_int(layer.bias.size());
        const double keep = layer.bias[j];
        layer.bias[j] = keep + h;
        const double lp = loss_against(p, x, c);
        layer.bias[j] = keep - h;
        const double lm = loss_against(p, x, c);
        layer.bias[j] = keep;
        CHECK(rel_err((lp - lm) / (2 * h), g.bias[li][j]) < 1e-4);
      } else {
        const std::size_t j = pick.uniform_int(layer.weight.size());
        const double keep = layer.weight.data()[j];
        layer.weight.data()[j] = keep + h;
        const double lp = loss_against(p, x, c);
        layer.weight.data()[j] = keep - h;
        const double lm = loss_against(p, x, c);
        layer.weight.data()[j] = keep;
        CHECK(rel_err((lp - lm) / (2 * h), g.weight[li].data()[j]) < 1e-4);
      }
      ++probes;
    }

    // Input gradients through the whole stack.
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double keep = x.data()[j];
      x.data()[j] = keep + h;
      const double lp = loss_against(p, x, c);
      x.data()[j] = keep - h;
      const double lm = loss_against(p, x, c);
      x.data()[j] = keep;
      CHECK(rel_err((lp - lm) / (2 * h), g.input.data()[j]) < 1e-4);
    }
  }
}

TEST_CASE("adam first step matches the closed form") {
  // After one step: m=(1-b1)g, v=(1-b2)g^2, mhat=g, vhat=g^2,
  // so delta = lr * g / (|g| + eps).
  MlpParams p;
  DenseLayer l;
  l.weight = Mat(1, 2);
  l.weight(0, 0) = 0.5;
  l.weight(0, 1) = -1.25;
  l.bias = {0.75, 0.0};
  p.layers = {l};
  AdamState s = make_adam_state(p, 0.01);
  MlpGrads g = zero_grads(p);
  g.weight[0](0, 0) = 0.2;
  g.weight[0](0, 1) = -3.0;
  g.bias[0] = {1.0, 0.0};
  adam_step(p, g, s);
  CHECK(p.layers[0].weight(0, 0) ==
        doctest::Approx(0.5 - 0.01 * 0.2 / (0.2 + 1e-8)).epsilon(1e-12));
  CHECK(p.layers[0].weight(0, 1) ==
        doctest::Approx(-1.25 - 0.01 * -3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.layers[0].bias[0] == doctest::Approx(0.75 - 0.01 * 1.0 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.layers[0].bias[1] == 0.0);
  CHECK(s.step == 1);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
  Rng rng(9);
  MlpParams p = make_mlp({1, 1}, Activation::Identity, Activation::Identity, 1.0, rng);
  AdamState s = make_adam_state(p, 0.05);
  // Minimize (w*1 + b - 3)^2.
  for (int i = 0; i < 2000; ++i) {
    ForwardTrace t;
    Vec y = mlp_forward(p, Vec{1.0}, &t);
    Mat dy(1, 1);
    dy(0, 0) = 2.0 * (y[0] - 3.0);
    MlpGrads g = mlp_backward(p, t, dy);
    adam_step(p, g, s);
  }
  Vec y = mlp_forward(p, Vec{1.0});
  CHECK(y[0] == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("weights hash is sensitive to single-bit parameter changes") {
  Rng rng(15);
  MlpParams p = make_mlp({4, 8, 2}, Activation::Tanh, Activation::Identity, 1.0, rng);
  const std::uint64_t h0 = weights_hash(p);
  MlpParams q = p;
  CHECK(weights_hash(q) == h0);
  q.layers[1].weight(3, 1) = std::nextafter(q.layers[1].weight(3, 1), 1.0);
  CHECK(weights_hash(q) != h0);
  MlpParams r = p;
  r.layers[0].out_scale = 2.0;
  CHECK(weights_hash(r) != h0);
}
