#include "salsa/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace salsa {

std::string activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + name);
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

MlpParams make_mlp(const std::vector<std::size_t>& dims, Activation hidden, Activation output,
                   double output_scale, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.weight.assign(dims[l], dims[l + 1]);
    layer.bias.assign(dims[l + 1], 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (std::size_t i = 0; i < layer.weight.size(); ++i)
      layer.weight.data()[i] = rng.uniform(-bound, bound);
    for (auto& b : layer.bias) b = rng.uniform(-bound, bound);
    const bool last = (l + 2 == dims.size());
    layer.act = last ? output : hidden;
    layer.out_scale = last ? output_scale : 1.0;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

namespace {

void apply_activation(const Mat& pre, Activation act, double scale, Mat& out) {
  out = pre;
  if (act == Activation::Tanh) tanh_inplace(out.data(), out.size());
  if (scale != 1.0)
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= scale;
}

void add_bias_rows(Mat& m, const Vec& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* __restrict__ r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias[j];
  }
}

}  // namespace

Mat mlp_forward(const MlpParams& p, const Mat& input, ForwardTrace* trace) {
  if (p.empty()) throw std::invalid_argument("mlp_forward: empty network");
  if (input.cols() != p.input_dim())
    throw std::invalid_argument("mlp_forward: input has " + std::to_string(input.cols()) +
                                " columns, network expects " + std::to_string(p.input_dim()));
  if (trace) {
    // Write straight into the trace so a reused trace recycles its buffers.
    trace->input = input;
    trace->pre.resize(p.layers.size());
    trace->out.resize(p.layers.size());
    const Mat* cur = &trace->input;
    for (std::size_t li = 0; li < p.layers.size(); ++li) {
      const auto& layer = p.layers[li];
      matmul(*cur, layer.weight, trace->pre[li]);
      add_bias_rows(trace->pre[li], layer.bias);
      apply_activation(trace->pre[li], layer.act, layer.out_scale, trace->out[li]);
      cur = &trace->out[li];
    }
    return *cur;
  }
  Mat cur = input;
  Mat pre;
  for (const auto& layer : p.layers) {
    matmul(cur, layer.weight, pre);
    add_bias_rows(pre, layer.bias);
    apply_activation(pre, layer.act, layer.out_scale, cur);
  }
  return cur;
}

Vec mlp_forward(const MlpParams& p, const Vec& input, ForwardTrace* trace) {
  Mat batch(1, input.size());
  batch.set_row(0, input);
  return mlp_forward(p, batch, trace).row_vec(0);
}

MlpGrads zero_grads(const MlpParams& p) {
  MlpGrads g;
  for (const auto& layer : p.layers) {
    g.weight.emplace_back(layer.weight.rows(), layer.weight.cols());
    g.bias.emplace_back(layer.bias.size(), 0.0);
  }
  return g;
}

void mlp_backward(const MlpParams& p, const ForwardTrace& trace, const Mat& output_grad,
                  MlpGrads& g, MlpScratch& scratch) {
  if (trace.out.size() != p.layers.size())
    throw std::invalid_argument("mlp_backward: trace does not match network depth");
  if (output_grad.rows() != trace.input.rows() || output_grad.cols() != p.output_dim())
    throw std::invalid_argument("mlp_backward: output_grad shape mismatch");

  // Weight grads must start at zero because matmul_at_acc accumulates.
  g.weight.resize(p.layers.size());
  g.bias.resize(p.layers.size());
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    g.weight[li].assign(p.layers[li].weight.rows(), p.layers[li].weight.cols());
    g.bias[li].assign(p.layers[li].bias.size(), 0.0);
  }

  scratch.delta = output_grad;  // dLoss/d(layer output)
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const DenseLayer& layer = p.layers[li];
    const Mat& out = trace.out[li];
    const double s = layer.out_scale;
    // dLoss/dPre: identity -> delta * s; tanh -> delta * s * (1 - tanh^2),
    // recovering tanh from the stored (scaled) output.
    Mat& dpre = scratch.dpre;
    dpre = scratch.delta;
    if (layer.act == Activation::Tanh) {
      for (std::size_t i = 0; i < dpre.size(); ++i) {
        const double t = out.data()[i] / s;
        dpre.data()[i] *= s * (1.0 - t * t);
      }
    } else if (s != 1.0) {
      for (std::size_t i = 0; i < dpre.size(); ++i) dpre.data()[i] *= s;
    }

    const Mat& x = (li == 0) ? trace.input : trace.out[li - 1];
    matmul_at_acc(x, dpre, g.weight[li]);
    Vec& db = g.bias[li];
    for (std::size_t r = 0; r < dpre.rows(); ++r) {
      const double* __restrict__ row = dpre.row(r);
      for (std::size_t j = 0; j < dpre.cols(); ++j) db[j] += row[j];
    }
    if (li == 0)
      matmul_bt(dpre, p.layers[li].weight, g.input);
    else
      matmul_bt(dpre, p.layers[li].weight, scratch.delta);
  }
}

MlpGrads mlp_backward(const MlpParams& p, const ForwardTrace& trace, const Mat& output_grad) {
  MlpGrads g;
  MlpScratch scratch;
  mlp_backward(p, trace, output_grad, g, scratch);
  return g;
}

AdamState make_adam_state(const MlpParams& p, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& layer : p.layers) {
    s.m_w.emplace_back(layer.weight.rows(), layer.weight.cols());
    s.v_w.emplace_back(layer.weight.rows(), layer.weight.cols());
    s.m_b.emplace_back(layer.bias.size(), 0.0);
    s.v_b.emplace_back(layer.bias.size(), 0.0);
  }
  return s;
}

namespace {

void adam_update(double* p, const double* g, double* m, double* v, std::size_t n, double lr,
                 double b1, double b2, double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

void adam_step(MlpParams& p, const MlpGrads& g, AdamState& s) {
  if (g.weight.size() != p.layers.size())
    throw std::invalid_argument("adam_step: gradient does not match network depth");
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    adam_update(p.layers[li].weight.data(), g.weight[li].data(), s.m_w[li].data(),
                s.v_w[li].data(), p.layers[li].weight.size(), s.lr, s.beta1, s.beta2, s.eps, bc1,
                bc2);
    adam_update(p.layers[li].bias.data(), g.bias[li].data(), s.m_b[li].data(), s.v_b[li].data(),
                p.layers[li].bias.size(), s.lr, s.beta1, s.beta2, s.eps, bc1, bc2);
  }
}

namespace {

inline void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
}

inline void fnv_doubles(std::uint64_t& h, const double* d, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(d[i]);
    unsigned char le[8];
    for (int k = 0; k < 8; ++k) le[k] = static_cast<unsigned char>(bits >> (8 * k));
    fnv_bytes(h, le, 8);
  }
}

}  // namespace

std::uint64_t weights_hash(const MlpParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& layer : p.layers) {
    const std::uint64_t shape[2] = {layer.weight.rows(), layer.weight.cols()};
    fnv_bytes(h, shape, sizeof(shape));
    fnv_doubles(h, layer.weight.data(), layer.weight.size());
    fnv_doubles(h, layer.bias.data(), layer.bias.size());
    const double scale = layer.out_scale;
    fnv_doubles(h, &scale, 1);
    const char act = layer.act == Activation::Tanh ? 't' : 'i';
    fnv_bytes(h, &act, 1);
  }
  return h;
}

}  // namespace salsa
