// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcnn/model.hpp"
#include "tcnn/text.hpp"

namespace tcnn {

struct TrainConfig {
  double learning_rate = 0.3;
  double momentum = 0.9;
  double l2_coeff = 1e-4;
  double dropout_rate = 0.5;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  std::uint64_t seed = 42;
  std::size_t min_count = 5;
  /// Optional max-norm clamp on each class column of fc_weight after every step.
  bool max_norm_clamp = false;
  double max_norm = 3.0;
  ModelConfig model;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Shape-congruent with ModelParams; the pad embedding row is always zero.
using Gradients = ModelParams;
using Velocity = ModelParams;

std::vector<double> one_hot(std::size_t label, std::size_t num_classes);

/// Sum over the batch of squared error between probabilities and targets,
/// plus l2_coeff * squared Frobenius norm of fc_weight.
double loss(std::span<const std::vector<double>> probabilities, std::span<const std::vector<double>> targets,
            const Matrix& fc_weight, double l2_coeff);

/// Analytic gradient of the single-sample loss (squared error of this trace
/// plus the l2 term) with respect to every parameter.
Gradients backward(const ForwardTrace& trace, std::span<const double> target, const ModelParams& params,
                   double l2_coeff);

struct BatchStats {
  double loss = 0.0;  // batch loss: summed error terms plus one regularizer term
  std::size_t correct = 0;
};

/// Batch-mean error gradient plus one regularizer gradient, written into
/// `grads` (resized as needed). Samples run forward/backward in parallel;
/// every coordinate is reduced in sample order, so the result does not
/// depend on the thread count. Each sample's dropout stream is derived from
/// `dropout_seed` and its position in the batch.
BatchStats batch_gradient(const ModelParams& params, std::span<const EncodedRecord* const> batch, double l2_coeff,
                          double dropout_rate, std::uint64_t dropout_seed, Gradients& grads);

/// Serial reference for batch_gradient built from per-sample backward().
BatchStats batch_gradient_reference(const ModelParams& params, std::span<const EncodedRecord* const> batch,
                                    double l2_coeff, double dropout_rate, std::uint64_t dropout_seed,
                                    Gradients& grads);

/// Momentum step applied to every tensor. The pad embedding row is never
/// touched. Throws NumericError on a non-finite gradient before any update.
void sgd_momentum_step(ModelParams& params, const Gradients& grads, Velocity& velocity, double momentum,
                       double learning_rate);

/// Rescales every class column of fc_weight whose L2 norm exceeds `max_norm`.
void clamp_max_norm(ModelParams& params, double max_norm);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> heldout_accuracy;
  double seconds = 0.0;
};
using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Seeded shuffle every epoch, batches of batch_size (last partial batch
/// kept), one momentum step per batch. Deterministic given the config.
TrainResult train(std::span<const EncodedRecord> data, std::size_t vocab_size, const TrainConfig& config,
                  std::span<const EncodedRecord> heldout = {}, const EpochCallback& on_epoch = {});

/// Inference accuracy of `params` on `data`.
double accuracy(const ModelParams& params, std::span<const EncodedRecord> data);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_rel_error_fc = 0.0;  // fc weight and fc bias coordinates only
  std::size_t coordinates = 0;
  std::size_t kinks_skipped = 0;  // coordinates whose +-epsilon step moved a pooling argmax or ReLU gate
  std::vector<std::pair<std::string, double>> per_tensor;  // max error per tensor
};

/// Compares batch_gradient (dropout off) with central differences of the
/// batch-mean loss at sampled coordinates. The reference loss is evaluated
/// in extended precision. Every tensor contributes up to `per_tensor`
/// distinct coordinates; embedding samples are drawn from rows present in
/// the batch plus the pad row. Coordinates straddling a kink are skipped and
/// replaced.
GradCheckResult grad_check(const ModelParams& params, std::span<const EncodedRecord> batch, double epsilon,
                           double l2_coeff, std::uint64_t seed, std::size_t per_tensor = 40);

/// Random records for gradient checks: each has a random length in
/// [seq_len/2, seq_len] of non-pad ids (unk included), then padding.
std::vector<EncodedRecord> random_batch(const ModelConfig& config, std::size_t vocab_size, std::size_t count,
                                        std::uint64_t seed);

/// Relative error used by grad_check.
inline double relative_error(double analytic, double numeric) {
  const double num = analytic > numeric ? analytic - numeric : numeric - analytic;
  const double den = (analytic < 0 ? -analytic : analytic) + (numeric < 0 ? -numeric : numeric);
  return num / (den > 1e-12 ? den : 1e-12);
}

}  // namespace tcnn
