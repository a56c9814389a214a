// SPDX-License-Identifier: Apache-2.0
#include "tcnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcnn/dropout.hpp"
#include "tcnn/error.hpp"
#include "tcnn/kernels.hpp"

namespace tcnn {

void ModelConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (seq_len < 1) throw ConfigError("seq_len must be >= 1");
  if (kernels_per_height < 1) throw ConfigError("kernels_per_height must be >= 1");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (conv_stride != 1) throw ConfigError("conv_stride must be 1");
  if (kernel_heights.empty()) throw ConfigError("kernel_heights must not be empty");
  for (std::size_t i = 0; i < kernel_heights.size(); ++i) {
    const auto h = kernel_heights[i];
    if (h < 1 || h > seq_len) {
      throw ConfigError("kernel height " + std::to_string(h) + " outside [1, seq_len=" + std::to_string(seq_len) + "]");
    }
    if (i > 0 && h <= kernel_heights[i - 1]) throw ConfigError("kernel_heights must be strictly increasing");
  }
}

std::vector<TensorRef> tensors(ModelParams& p) {
  const std::size_t d = p.config.embedding_dim;
  std::vector<TensorRef> out;
  out.push_back({"embedding", {p.embedding.rows, p.embedding.cols}, p.embedding.data});
  for (auto& bank : p.conv) {
    const std::string h = std::to_string(bank.height);
    out.push_back({"conv.h" + h + ".weight", {bank.kernels(), bank.height, d}, bank.weight.data});
    out.push_back({"conv.h" + h + ".bias", {bank.bias.size()}, bank.bias});
  }
  out.push_back({"fc.weight", {p.fc_weight.rows, p.fc_weight.cols}, p.fc_weight.data});
  out.push_back({"fc.bias", {p.fc_bias.size()}, p.fc_bias});
  return out;
}

std::vector<ConstTensorRef> tensors(const ModelParams& p) {
  auto mut = tensors(const_cast<ModelParams&>(p));
  std::vector<ConstTensorRef> out;
  out.reserve(mut.size());
  for (auto& t : mut) out.push_back({std::move(t.name), std::move(t.dims), t.values});
  return out;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z;
  z.config = params.config;
  z.embedding = Matrix(params.embedding.rows, params.embedding.cols);
  for (const auto& bank : params.conv) {
    z.conv.push_back({bank.height, Matrix(bank.weight.rows, bank.weight.cols), std::vector<double>(bank.bias.size())});
  }
  z.fc_weight = Matrix(params.fc_weight.rows, params.fc_weight.cols);
  z.fc_bias.assign(params.fc_bias.size(), 0.0);
  return z;
}

ModelParams init_params(const ModelConfig& config, std::size_t vocab_size, std::uint64_t seed) {
  config.validate();
  if (vocab_size < 2) throw ConfigError("vocabulary must hold at least the pad and unk tokens");

  constexpr double kInitRange = 0.05;
  Rng rng(seed);
  auto fill = [&](std::span<double> v) {
    for (auto& x : v) x = rng.uniform(-kInitRange, kInitRange);
  };

  const std::size_t d = config.embedding_dim;
  ModelParams p;
  p.config = config;
  p.embedding = Matrix(vocab_size, d);
  fill(std::span(p.embedding.data).subspan(d));  // row 0 stays zero
  for (auto h : config.kernel_heights) {
    ConvBank bank{h, Matrix(config.kernels_per_height, h * d), std::vector<double>(config.kernels_per_height)};
    fill(bank.weight.data);
    fill(bank.bias);
    p.conv.push_back(std::move(bank));
  }
  p.fc_weight = Matrix(config.feature_dim(), config.num_classes);
  fill(p.fc_weight.data);
  p.fc_bias.assign(config.num_classes, 0.0);
  return p;
}

bool all_finite(const ModelParams& params) {
  for (const auto& t : tensors(params)) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

Matrix embed(std::span<const TokenId> ids, const ModelParams& params) {
  const std::size_t d = params.embedding.cols;
  Matrix x(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= params.vocab_size()) {
      throw ShapeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(params.vocab_size()));
    }
    // pad positions embed to zero whatever row 0 holds
    if (id != Vocabulary::pad_id) std::copy_n(params.embedding.row(static_cast<std::size_t>(id)).begin(), d, x.row(i).begin());
  }
  return x;
}

ConvOutput conv_forward(const Matrix& x, const Matrix& kernel, double bias) {
  if (kernel.cols != x.cols) throw ShapeError("kernel width must equal embedding dimension");
  if (kernel.rows < 1 || kernel.rows > x.rows) throw ShapeError("kernel height exceeds sequence length");
  const std::size_t window = kernel.size();
  const std::size_t positions = x.rows - kernel.rows + 1;
  ConvOutput out;
  out.pre.resize(positions);
  out.post.resize(positions);
  for (std::size_t p = 0; p < positions; ++p) {
    out.pre[p] = dot(kernel.data, x.rows_span(p, kernel.rows).first(window)) + bias;
    out.post[p] = std::max(0.0, out.pre[p]);
  }
  return out;
}

PoolResult global_max_pool(std::span<const double> values) {
  if (values.empty()) throw ShapeError("cannot pool an empty vector");
  PoolResult r{values[0], 0};
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > r.value) r = {values[i], i};
  }
  return r;
}

std::size_t argmax(std::span<const double> values) { return global_max_pool(values).argmax; }

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax of an empty vector");
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax input is not finite");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

namespace {

void convolve_all(const ModelParams& params, ForwardTrace& t) {
  const auto& cfg = params.config;
  if (t.ids.size() != cfg.seq_len) {
    throw ShapeError("expected " + std::to_string(cfg.seq_len) + " ids, got " + std::to_string(t.ids.size()));
  }
  t.embedded = embed(t.ids, params);
  t.kernels.resize(cfg.feature_dim());
  t.features.resize(cfg.feature_dim());
  std::size_t offset = 0;
  for (const auto& bank : params.conv) {
    std::span<KernelTrace> slot(t.kernels.data() + offset, bank.kernels());
    kernels::conv_bank_parallel(t.embedded, bank, slot);
    for (std::size_t k = 0; k < bank.kernels(); ++k) t.features[offset + k] = slot[k].post[slot[k].argmax];
    offset += bank.kernels();
  }
}

}  // namespace

ForwardTrace forward(std::span<const TokenId> ids, const ModelParams& params, Mode mode, double dropout_rate,
                     Rng* rng) {
  if (mode == Mode::train && rng == nullptr) throw ConfigError("train-mode forward needs a generator");
  ForwardTrace t;
  t.ids.assign(ids.begin(), ids.end());
  convolve_all(params, t);

  auto dropped = apply_dropout(t.features, mode == Mode::train ? dropout_rate : 0.0, rng, mode);
  t.fc_input = std::move(dropped.values);
  t.dropout_mask = std::move(dropped.mask);
  t.dropout_scale = dropped.scale;

  const std::size_t classes = params.config.num_classes;
  t.logits.assign(params.fc_bias.begin(), params.fc_bias.end());
  for (std::size_t f = 0; f < t.fc_input.size(); ++f) {
    const double v = t.fc_input[f];
    if (v == 0.0) continue;
    const auto w = params.fc_weight.row(f);
    for (std::size_t l = 0; l < classes; ++l) t.logits[l] += w[l] * v;
  }
  t.probabilities = softmax(t.logits);
  return t;
}

std::vector<double> extract_features(std::span<const TokenId> ids, const ModelParams& params) {
  ForwardTrace t;
  t.ids.assign(ids.begin(), ids.end());
  convolve_all(params, t);
  return std::move(t.features);
}

Prediction predict(std::string_view text, const ModelParams& params, const Vocabulary& vocab,
                   const LabelMap& labels, const Tokenizer& tokenizer) {
  const auto ids = encode(tokenizer(text), vocab, params.config.seq_len);
  auto trace = forward(ids, params, Mode::infer);
  Prediction p;
  p.class_id = argmax(trace.probabilities);
  p.label = labels.label(p.class_id);
  p.probabilities = std::move(trace.probabilities);
  return p;
}

}  // namespace tcnn
