// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tcnn/rng.hpp"
#include "tcnn/tensor.hpp"
#include "tcnn/text.hpp"

namespace tcnn {

struct ModelConfig {
  std::size_t embedding_dim = 300;
  std::size_t seq_len = 130;
  std::vector<std::size_t> kernel_heights{4, 5, 6};
  std::size_t kernels_per_height = 128;
  std::size_t num_classes = 6;
  std::size_t conv_stride = 1;  // only 1 is supported

  /// Throws ConfigError on any violated shape rule.
  void validate() const;
  std::size_t feature_dim() const noexcept { return kernel_heights.size() * kernels_per_height; }
  std::size_t conv_length(std::size_t height) const noexcept { return seq_len - height + 1; }

  static ModelConfig full(std::size_t num_classes = 6) {
    ModelConfig c;
    c.num_classes = num_classes;
    return c;
  }
  /// Reduced preset for fast end-to-end runs; same algorithm.
  static ModelConfig desk(std::size_t num_classes = 6) {
    ModelConfig c;
    c.embedding_dim = 32;
    c.seq_len = 40;
    c.kernel_heights = {2, 3, 4};
    c.kernels_per_height = 16;
    c.num_classes = num_classes;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

/// All kernels of one height. Row k of `weight` is kernel k flattened
/// row-major as height x embedding_dim.
struct ConvBank {
  std::size_t height = 0;
  Matrix weight;
  std::vector<double> bias;

  std::size_t kernels() const noexcept { return weight.rows; }
  bool operator==(const ConvBank&) const = default;
};

struct ModelParams {
  ModelConfig config;
  Matrix embedding;         // vocab_size x D, row 0 (pad) is zero
  std::vector<ConvBank> conv;  // one bank per height, ascending
  Matrix fc_weight;         // feature_dim x num_classes
  std::vector<double> fc_bias;

  std::size_t vocab_size() const noexcept { return embedding.rows; }
  bool operator==(const ModelParams&) const = default;
};

/// Named view of one parameter tensor.
struct TensorRef {
  std::string name;
  std::vector<std::size_t> dims;
  std::span<double> values;
};
struct ConstTensorRef {
  std::string name;
  std::vector<std::size_t> dims;
  std::span<const double> values;
};

/// Canonical tensor order: embedding, then per bank weight and bias, then fc weight and fc bias.
std::vector<TensorRef> tensors(ModelParams& params);
std::vector<ConstTensorRef> tensors(const ModelParams& params);

/// Zero-filled parameters with the same config and shapes.
ModelParams zeros_like(const ModelParams& params);

/// Uniform(-0.05, 0.05) everywhere except the pad embedding row and fc bias (zeros).
ModelParams init_params(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed);

bool all_finite(const ModelParams& params);

/// Embedding lookup: row i is embedding row ids[i].
Matrix embed(std::span<const TokenId> ids, const ModelParams& params);

struct ConvOutput {
  std::vector<double> pre;   // before ReLU
  std::vector<double> post;  // after ReLU
};

/// Valid convolution of one height x D kernel over X with stride 1.
ConvOutput conv_forward(const Matrix& x, const Matrix& kernel, double bias);

struct PoolResult {
  double value = 0.0;
  std::size_t argmax = 0;
};

/// Max and smallest index attaining it. Throws ShapeError on empty input.
PoolResult global_max_pool(std::span<const double> values);

/// Max-shifted softmax. Throws NumericError on non-finite input.
std::vector<double> softmax(std::span<const double> logits);

/// Smallest index of the maximum.
std::size_t argmax(std::span<const double> values);

enum class Mode { train, infer };

struct KernelTrace {
  std::vector<double> pre;
  std::vector<double> post;
  std::size_t argmax = 0;
};

struct ForwardTrace {
  std::vector<TokenId> ids;
  Matrix embedded;
  std::vector<KernelTrace> kernels;  // feature order: heights ascending, kernel ascending
  std::vector<double> features;      // pooled values, before dropout
  std::optional<std::vector<double>> dropout_mask;  // 1 keep / 0 drop; train mode only
  double dropout_scale = 1.0;
  std::vector<double> fc_input;      // features after dropout (== features at inference)
  std::vector<double> logits;
  std::vector<double> probabilities;
};

/// Full forward pass. Train mode applies dropout to the feature vector and
/// requires `rng`; infer mode ignores both.
ForwardTrace forward(std::span<const TokenId> ids, const ModelParams& params, Mode mode,
                     double dropout_rate = 0.0, Rng* rng = nullptr);

/// Inference-only forward returning just the pooled feature vector.
std::vector<double> extract_features(std::span<const TokenId> ids, const ModelParams& params);

struct Prediction {
  std::size_t class_id = 0;
  std::string label;
  std::vector<double> probabilities;
};

Prediction predict(std::string_view text, const ModelParams& params, const Vocabulary& vocab,
                   const LabelMap& labels, const Tokenizer& tokenizer = tokenize);

}  // namespace tcnn
