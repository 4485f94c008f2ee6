#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "salsa/mat.hpp"
#include "salsa/rng.hpp"

namespace salsa {

enum class Activation { Identity, Tanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Mat weight;  // (in x out); forward is x * weight + bias
  Vec bias;
  Activation act = Activation::Identity;
  double out_scale = 1.0;  // multiplies the activation output

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }
  std::size_t parameter_count() const;
  bool empty() const { return layers.empty(); }
};

// Per-layer pre-activations and outputs kept from a forward pass so the
// backward pass can run without recomputation.
struct ForwardTrace {
  Mat input;
  std::vector<Mat> pre;
  std::vector<Mat> out;
};

struct MlpGrads {
  std::vector<Mat> weight;
  std::vector<Vec> bias;
  Mat input;  // gradient with respect to the forward input batch
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
// dims lists layer widths input-first, e.g. {3, 64, 64, 9}.
MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Activation output,
                   double output_scale, Rng& rng);

// Batched forward: input is (batch x in). Pass a trace to retain
// intermediates for mlp_backward.
Mat mlp_forward(const MlpParams& p, const Mat& input, ForwardTrace* trace = nullptr);
Vec mlp_forward(const MlpParams& p, const Vec& input, ForwardTrace* trace = nullptr);

// Backprop through the trace. output_grad is dLoss/dOutput, shape (batch x out).
MlpGrads mlp_backward(const MlpParams& p, const ForwardTrace& trace, const Mat& output_grad);

// Intermediate batch buffers for the reusing backward overload below.
struct MlpScratch {
  Mat delta, dpre;
};

// Same computation, but g and scratch are resized in place so a training
// loop that keeps them across batches runs allocation-free in steady state.
void mlp_backward(const MlpParams& p, const ForwardTrace& trace, const Mat& output_grad,
                  MlpGrads& g, MlpScratch& scratch);

MlpGrads zero_grads(const MlpParams& p);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;
};

AdamState make_adam_state(const MlpParams& p, double lr);
void adam_step(MlpParams& p, const MlpGrads& g, AdamState& s);

// FNV-1a over the little-endian bytes of every weight and bias plus layer
// shape markers. Used to verify that frozen networks stay untouched and that
// serialization round-trips exactly.
std::uint64_t weights_hash(const MlpParams& p);

}  // namespace salsa
