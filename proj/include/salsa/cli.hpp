#pragma once

#include <string>
#include <vector>

#include "salsa/policy.hpp"

namespace salsa {

// Parses "0:30,150:200" into half-open mask intervals. Empty text gives an
// empty mask. Malformed text throws std::invalid_argument; overlap and bounds
// are checked later against the rollout horizon.
ActionMask parse_mask(const std::string& text);

// The whole command line, callable in-process for tests; args excludes the
// program name (e.g. {"train", "--env", "pendulum"}). Exit codes: 0 success,
// 2 usage error, 3 numeric failure, 4 missing prerequisite.
int run_cli(const std::vector<std::string>& args);

}  // namespace salsa
