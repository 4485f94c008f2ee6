#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "salsa/mlp.hpp"

namespace salsa {

// Frozen action autoencoder: encoder maps an action to the latent the policy
// evolves, decoder maps latents back to actions. Trained once per
// environment and latent size, then left untouched by policy training.
struct AutoencoderParams {
  MlpParams encoder;  // action_dim -> 64 -> 64 -> latent_dim
  MlpParams decoder;  // latent_dim -> 96 -> 96 -> action_dim
  std::size_t latent_dim = 0;
  std::size_t action_dim = 0;
  bool frozen = false;

  std::uint64_t hash() const;
};

Vec encode(const AutoencoderParams& ae, const Vec& action);
Vec decode(const AutoencoderParams& ae, const Vec& z);

struct ActionDataset {
  Mat actions;  // one sample per row
  Vec low, high;
  std::string source;  // "uniform" or "agent"
};

// Uniform samples over the action box.
ActionDataset uniform_action_dataset(const Vec& low, const Vec& high, std::size_t n,
                                     std::uint64_t seed);

struct AeTrainConfig {
  int epochs = 500;
  int batch_size = 256;
  double lr = 1e-3;
  double lr_decay = 0.5;     // multiplied into lr every lr_decay_epochs
  int lr_decay_epochs = 100;
  double heldout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct AeTrainResult {
  AutoencoderParams params;
  double heldout_mse = 0.0;
  std::size_t heldout_count = 0;
  std::vector<double> epoch_loss;  // mean train MSE per epoch
};

// Trains encoder and decoder against reconstruction MSE and returns them
// frozen. The train/holdout split is part of the contract: row indices are
// shuffled by Fisher-Yates driven by Rng(derive_seed(cfg.seed, 2, 0)) and the
// last round(heldout_fraction * n) shuffled indices form the holdout, which
// never enters a training batch. Throws numeric_error if the loss goes
// non-finite.
AeTrainResult train_autoencoder(const ActionDataset& data, std::size_t latent_dim,
                                const AeTrainConfig& cfg);

}  // namespace salsa
