#include "salsa/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "salsa/errors.hpp"

namespace salsa {

std::uint64_t AutoencoderParams::hash() const {
  // Mix the two net hashes so either net changing changes the result.
  std::uint64_t h = weights_hash(encoder);
  h ^= weights_hash(decoder) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

Vec encode(const AutoencoderParams& ae, const Vec& action) {
  return mlp_forward(ae.encoder, action);
}

Vec decode(const AutoencoderParams& ae, const Vec& z) { return mlp_forward(ae.decoder, z); }

ActionDataset uniform_action_dataset(const Vec& low, const Vec& high, std::size_t n,
                                     std::uint64_t seed) {
  if (low.size() != high.size() || low.empty()) {
    throw std::invalid_argument("uniform_action_dataset: bad bounds");
  }
  for (std::size_t d = 0; d < low.size(); ++d) {
    if (!(low[d] < high[d]) || !std::isfinite(low[d]) || !std::isfinite(high[d])) {
      throw std::invalid_argument("uniform_action_dataset: bounds must be finite with low < high");
    }
  }
  ActionDataset data;
  data.low = low;
  data.high = high;
  data.source = "uniform";
  data.actions = Mat(n, low.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < low.size(); ++d) {
      data.actions(i, d) = low[d] + (high[d] - low[d]) * rng.uniform();
    }
  }
  return data;
}

namespace {

void gather_rows(const Mat& src, const std::vector<std::size_t>& idx, std::size_t begin,
                 std::size_t count, Mat& out) {
  out.reshape(count, src.cols());
  for (std::size_t i = 0; i < count; ++i) {
    const double* r = src.row(idx[begin + i]);
    std::copy(r, r + src.cols(), out.row(i));
  }
}

double reconstruction_mse(const AutoencoderParams& ae, const Mat& batch) {
  Mat recon = mlp_forward(ae.decoder, mlp_forward(ae.encoder, batch));
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double d = recon.data()[i] - batch.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(batch.size());
}

}  // namespace

AeTrainResult train_autoencoder(const ActionDataset& data, std::size_t latent_dim,
                                const AeTrainConfig& cfg) {
  const std::size_t n = data.actions.rows();
  const std::size_t act_dim = data.actions.cols();
  if (n < 10 || act_dim == 0) throw std::invalid_argument("train_autoencoder: dataset too small");
  if (latent_dim == 0) throw std::invalid_argument("train_autoencoder: latent_dim must be > 0");

  Rng rng(derive_seed(cfg.seed, 1, 0));
  AeTrainResult res;
  res.params.encoder = make_mlp({act_dim, 64, 64, latent_dim}, Activation::Tanh,
                                Activation::Identity, 1.0, rng);
  res.params.decoder = make_mlp({latent_dim, 96, 96, act_dim}, Activation::Tanh,
                                Activation::Identity, 1.0, rng);
  res.params.latent_dim = latent_dim;
  res.params.action_dim = act_dim;

  // Deterministic shuffle, then a tail split for holdout.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(cfg.seed, 2, 0));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = shuffle_rng.uniform_int(i + 1);
    std::swap(order[i], order[j]);
  }
  const auto n_held = static_cast<std::size_t>(std::llround(
      static_cast<double>(n) * cfg.heldout_fraction));
  const std::size_t n_train = n - n_held;
  if (n_train == 0) throw std::invalid_argument("train_autoencoder: empty train split");
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  Mat heldout;
  gather_rows(data.actions, order, n_train, n_held, heldout);

  AdamState enc_opt = make_adam_state(res.params.encoder, cfg.lr);
  AdamState dec_opt = make_adam_state(res.params.decoder, cfg.lr);
  Rng epoch_rng(derive_seed(cfg.seed, 3, 0));
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  res.epoch_loss.reserve(cfg.epochs);
  // Batch buffers live across the whole run; steady state allocates nothing.
  ForwardTrace enc_trace, dec_trace;
  MlpGrads enc_g, dec_g;
  MlpScratch scratch;
  Mat x, dout;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_epochs);
    enc_opt.lr = lr;
    dec_opt.lr = lr;
    for (std::size_t i = n_train - 1; i > 0; --i) {
      std::size_t j = epoch_rng.uniform_int(i + 1);
      std::swap(train_idx[i], train_idx[j]);
    }
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t b = std::min(batch, n_train - start);
      gather_rows(data.actions, train_idx, start, b, x);
      mlp_forward(res.params.encoder, x, &enc_trace);
      mlp_forward(res.params.decoder, enc_trace.out.back(), &dec_trace);
      const Mat& recon = dec_trace.out.back();

      // MSE over batch and action dims; d/d_recon = 2 (recon - x) / (b * act_dim).
      const double inv = 1.0 / static_cast<double>(b * act_dim);
      double batch_sum = 0.0;
      dout.reshape(b, act_dim);
      for (std::size_t i = 0; i < recon.size(); ++i) {
        const double d = recon.data()[i] - x.data()[i];
        batch_sum += d * d;
        dout.data()[i] = 2.0 * d * inv;
      }
      epoch_sum += batch_sum;

      mlp_backward(res.params.decoder, dec_trace, dout, dec_g, scratch);
      mlp_backward(res.params.encoder, enc_trace, dec_g.input, enc_g, scratch);
      adam_step(res.params.decoder, dec_g, dec_opt);
      adam_step(res.params.encoder, enc_g, enc_opt);
    }
    const double epoch_mse = epoch_sum / static_cast<double>(n_train * act_dim);
    if (!std::isfinite(epoch_mse)) {
      throw numeric_error("train_autoencoder: non-finite loss at epoch " + std::to_string(epoch));
    }
    res.epoch_loss.push_back(epoch_mse);
  }

  res.params.frozen = true;
  res.heldout_count = n_held;
  res.heldout_mse = n_held > 0 ? reconstruction_mse(res.params, heldout)
                               : res.epoch_loss.back();
  return res;
}

}  // namespace salsa
