// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tcnn/model.hpp"
#include "tcnn/rng.hpp"

namespace tcnn {

struct DropoutResult {
  std::vector<double> values;
  std::optional<std::vector<double>> mask;  // absent at inference
  double scale = 1.0;                       // 1 / (1 - rate)
};

/// Inverted dropout. Train mode zeroes each entry with probability `rate`
/// and scales survivors by 1/(1-rate); infer mode is the identity.
/// Throws ConfigError unless 0 <= rate < 1.
DropoutResult apply_dropout(std::span<const double> features, double rate, Rng* rng, Mode mode);

}  // namespace tcnn
