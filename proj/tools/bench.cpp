// Throughput check for the dense kernels: matmul GFLOP/s, tanh ns/element,
// and a full forward/backward pass over autoencoder-sized networks.
#include <chrono>
#include <cmath>
#include <cstdio>

#include "salsa/mlp.hpp"
#include "salsa/rng.hpp"

using namespace salsa;
using clk = std::chrono::steady_clock;

static double secs(clk::time_point a, clk::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

int main() {
  Rng rng(7);

  {
    const std::size_t b = 256, in = 64, out = 64;
    Mat x(b, in), w(in, out), y;
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
    const int reps = 4000;
    matmul(x, w, y);
    auto t0 = clk::now();
    for (int r = 0; r < reps; ++r) matmul(x, w, y);
    auto t1 = clk::now();
    const double flops = 2.0 * b * in * out * reps;
    std::printf("matmul 256x64x64:   %7.2f GFLOP/s\n", flops / secs(t0, t1) / 1e9);
  }
  {
    const std::size_t b = 256, in = 96, out = 96;
    Mat x(b, in), w(in, out), y;
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
    const int reps = 2000;
    matmul(x, w, y);
    auto t0 = clk::now();
    for (int r = 0; r < reps; ++r) matmul(x, w, y);
    auto t1 = clk::now();
    const double flops = 2.0 * b * in * out * reps;
    std::printf("matmul 256x96x96:   %7.2f GFLOP/s\n", flops / secs(t0, t1) / 1e9);
  }
  {
    std::vector<double> buf(1 << 16);
    for (auto& v : buf) v = rng.uniform(-6, 6);
    const int reps = 2000;
    auto t0 = clk::now();
    for (int r = 0; r < reps; ++r) tanh_inplace(buf.data(), buf.size());
    auto t1 = clk::now();
    std::printf("tanh_inplace:       %7.3f ns/elem\n",
                secs(t0, t1) / (static_cast<double>(buf.size()) * reps) * 1e9);
  }
  {
    // One autoencoder training step shape: encoder 1-64-64-3, decoder 3-96-96-1,
    // batch 256, forward + backward through both.
    Rng wrng(3);
    MlpParams enc = make_mlp({1, 64, 64, 3}, Activation::Tanh, Activation::Identity, 1.0, wrng);
    MlpParams dec = make_mlp({3, 96, 96, 1}, Activation::Tanh, Activation::Identity, 1.0, wrng);
    Mat x(256, 1);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
    const int reps = 2000;
    auto t0 = clk::now();
    double sink = 0;
    for (int r = 0; r < reps; ++r) {
      ForwardTrace te, td;
      Mat z = mlp_forward(enc, x, &te);
      Mat y = mlp_forward(dec, z, &td);
      Mat dy(y.rows(), y.cols());
      for (std::size_t i = 0; i < dy.size(); ++i)
        dy.data()[i] = 2.0 * (y.data()[i] - x.data()[i]) / y.rows();
      MlpGrads gd = mlp_backward(dec, td, dy);
      MlpGrads ge = mlp_backward(enc, te, gd.input);
      sink += ge.weight[0](0, 0);
    }
    auto t1 = clk::now();
    const double per_sample = secs(t0, t1) / (256.0 * reps);
    std::printf("ae fwd+bwd:         %7.1f ns/sample  (500 epochs x 45k -> %5.1f s)  [%g]\n",
                per_sample * 1e9, per_sample * 500 * 45000, sink);
  }
  return 0;
}
