// SPDX-License-Identifier: Apache-2.0
#include "tcnn/dropout.hpp"

#include "tcnn/error.hpp"

namespace tcnn {

DropoutResult apply_dropout(std::span<const double> features, double rate, Rng* rng, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  DropoutResult r;
  r.values.assign(features.begin(), features.end());
  if (mode == Mode::infer) return r;
  if (rng == nullptr) throw ConfigError("train-mode dropout needs a generator");

  r.scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(features.size(), 1.0);
  if (rate > 0.0) {
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (rng->bernoulli(rate)) mask[i] = 0.0;
      r.values[i] = features[i] * mask[i] * r.scale;
    }
  }
  r.mask = std::move(mask);
  return r;
}

}  // namespace tcnn
