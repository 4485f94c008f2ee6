#pragma once

#include <stdexcept>
#include <string>

namespace salsa {

// Numeric failure at runtime: non-finite values, divergence, singular or
// non-converging linear algebra. CLI maps this to exit code 3.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required input artifact (pretrained autoencoder, bundle, trajectory)
// is absent or unusable. CLI maps this to exit code 4.
struct missing_input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace salsa
