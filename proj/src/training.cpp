// SPDX-License-Identifier: Apache-2.0
#include "tcnn/training.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "tcnn/error.hpp"
#include "tcnn/kernels.hpp"
#include "parallel.hpp"

namespace tcnn {

void TrainConfig::validate() const {
  model.validate();
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum > 0.0 && momentum <= 1.0)) throw ConfigError("momentum must be in (0, 1]");
  if (!(l2_coeff >= 0.0) || !std::isfinite(l2_coeff)) throw ConfigError("l2_coeff must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (max_norm_clamp && !(max_norm > 0.0)) throw ConfigError("max_norm must be > 0");
}

std::vector<double> one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw ShapeError("label " + std::to_string(label) + " out of range for " + std::to_string(num_classes) +
                     " classes");
  }
  std::vector<double> t(num_classes, 0.0);
  t[label] = 1.0;
  return t;
}

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double squared_error(std::span<const double> p, std::span<const double> t) {
  if (p.size() != t.size()) throw ShapeError("probability and target lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return s;
}

// dE/dy of E = sum_i (P_i - T_i)^2 through the softmax Jacobian.
std::vector<double> logit_gradient(std::span<const double> p, std::span<const double> t) {
  std::vector<double> dp(p.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    dp[i] = 2.0 * (p[i] - t[i]);
    s += p[i] * dp[i];
  }
  std::vector<double> dy(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) dy[j] = p[j] * (dp[j] - s);
  return dy;
}

// Gradient w.r.t. each pooled feature, after the dropout mask and the ReLU
// gate at the pooled position. Zero means the kernel receives nothing.
std::vector<double> feature_gradient(const ForwardTrace& trace, std::span<const double> dy, const ModelParams& params) {
  const std::size_t classes = dy.size();
  std::vector<double> g(trace.features.size(), 0.0);
  for (std::size_t f = 0; f < g.size(); ++f) {
    const auto w = params.fc_weight.row(f);
    double v = 0.0;
    for (std::size_t l = 0; l < classes; ++l) v += w[l] * dy[l];
    if (trace.dropout_mask) v *= (*trace.dropout_mask)[f] * trace.dropout_scale;
    const auto& k = trace.kernels[f];
    g[f] = k.pre[k.argmax] > 0.0 ? v : 0.0;
  }
  return g;
}

void check_trace(const ForwardTrace& trace, const ModelParams& params) {
  const auto& cfg = params.config;
  if (trace.ids.size() != cfg.seq_len || trace.features.size() != cfg.feature_dim() ||
      trace.kernels.size() != cfg.feature_dim() || trace.probabilities.size() != cfg.num_classes) {
    throw ShapeError("forward trace does not match the model parameters");
  }
}

}  // namespace

double loss(std::span<const std::vector<double>> probabilities, std::span<const std::vector<double>> targets,
            const Matrix& fc_weight, double l2_coeff) {
  if (probabilities.empty()) throw ShapeError("loss of an empty batch");
  if (probabilities.size() != targets.size()) throw ShapeError("batch sizes of probabilities and targets differ");
  double total = 0.0;
  for (std::size_t s = 0; s < probabilities.size(); ++s) total += squared_error(probabilities[s], targets[s]);
  return total + l2_coeff * squared_norm(fc_weight.data);
}

Gradients backward(const ForwardTrace& trace, std::span<const double> target, const ModelParams& params,
                   double l2_coeff) {
  check_trace(trace, params);
  if (target.size() != params.config.num_classes) throw ShapeError("target length differs from class count");

  Gradients g = zeros_like(params);
  const std::size_t classes = params.config.num_classes;
  const std::size_t d = params.config.embedding_dim;

  const auto dy = logit_gradient(trace.probabilities, target);
  for (std::size_t l = 0; l < classes; ++l) g.fc_bias[l] = dy[l];
  for (std::size_t f = 0; f < trace.fc_input.size(); ++f) {
    for (std::size_t l = 0; l < classes; ++l) g.fc_weight(f, l) = trace.fc_input[f] * dy[l];
  }

  const auto dfeat = feature_gradient(trace, dy, params);
  std::size_t f = 0;
  for (std::size_t b = 0; b < params.conv.size(); ++b) {
    const auto& bank = params.conv[b];
    const std::size_t window = bank.height * d;
    for (std::size_t k = 0; k < bank.kernels(); ++k, ++f) {
      const double gk = dfeat[f];
      if (gk == 0.0) continue;
      const std::size_t a = trace.kernels[f].argmax;
      const auto xs = trace.embedded.rows_span(a, bank.height);
      auto dw = g.conv[b].weight.row(k);
      for (std::size_t i = 0; i < window; ++i) dw[i] += gk * xs[i];
      g.conv[b].bias[k] += gk;

      const auto w = bank.weight.row(k);
      for (std::size_t i = 0; i < bank.height; ++i) {
        const TokenId id = trace.ids[a + i];
        if (id == Vocabulary::pad_id) continue;
        auto row = g.embedding.row(static_cast<std::size_t>(id));
        for (std::size_t j = 0; j < d; ++j) row[j] += gk * w[i * d + j];
      }
    }
  }

  for (std::size_t i = 0; i < g.fc_weight.size(); ++i) g.fc_weight.data[i] += 2.0 * l2_coeff * params.fc_weight.data[i];
  return g;
}

namespace {

// What phase two of batch_gradient needs from one sample.
struct SampleSignal {
  const EncodedRecord* record = nullptr;
  std::vector<double> fc_input;
  std::vector<double> dy;
  std::vector<double> dfeat;
  std::vector<std::size_t> argmax;
  double error = 0.0;
  bool correct = false;
};

void resize_like(Gradients& grads, const ModelParams& params) {
  bool same = grads.embedding.rows == params.embedding.rows && grads.embedding.cols == params.embedding.cols &&
              grads.conv.size() == params.conv.size() && grads.fc_weight.rows == params.fc_weight.rows &&
              grads.fc_weight.cols == params.fc_weight.cols;
  for (std::size_t b = 0; same && b < params.conv.size(); ++b) {
    same = grads.conv[b].weight.rows == params.conv[b].weight.rows &&
           grads.conv[b].weight.cols == params.conv[b].weight.cols;
  }
  if (!same) {
    grads = zeros_like(params);
    return;
  }
  grads.config = params.config;
  for (auto& t : tensors(grads)) std::fill(t.values.begin(), t.values.end(), 0.0);
}

void finish_batch_gradient(Gradients& grads, const ModelParams& params, std::size_t batch, double l2_coeff) {
  const double inv = 1.0 / static_cast<double>(batch);
  for (auto& t : tensors(grads)) {
    double* v = t.values.data();
    const auto n = static_cast<std::ptrdiff_t>(t.values.size());
#pragma omp parallel for simd schedule(static) if (n > (1 << 15))
    for (std::ptrdiff_t i = 0; i < n; ++i) v[i] *= inv;
  }
  for (std::size_t i = 0; i < grads.fc_weight.size(); ++i) {
    grads.fc_weight.data[i] += 2.0 * l2_coeff * params.fc_weight.data[i];
  }
}

void check_batch(const ModelParams& params, std::span<const EncodedRecord* const> batch) {
  if (batch.empty()) throw ShapeError("empty batch");
  for (const auto* r : batch) {
    if (r->label >= params.config.num_classes) throw ShapeError("label out of range");
    if (r->ids.size() != params.config.seq_len) throw ShapeError("record length differs from seq_len");
  }
}

}  // namespace

BatchStats batch_gradient(const ModelParams& params, std::span<const EncodedRecord* const> batch, double l2_coeff,
                          double dropout_rate, std::uint64_t dropout_seed, Gradients& grads) {
  check_batch(params, batch);
  resize_like(grads, params);

  const auto& cfg = params.config;
  const std::size_t d = cfg.embedding_dim;
  const std::size_t classes = cfg.num_classes;
  const std::size_t feat = cfg.feature_dim();
  const auto n = static_cast<std::ptrdiff_t>(batch.size());

  // Phase 1: independent per-sample forward passes and output-side gradients.
  std::vector<SampleSignal> sig(batch.size());
  detail::IterationErrors errors(batch.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    errors.run(static_cast<std::size_t>(s), [&] {
      const auto* rec = batch[static_cast<std::size_t>(s)];
      Rng rng(mix_seed(dropout_seed, static_cast<std::uint64_t>(s)));
      const auto trace = forward(rec->ids, params, Mode::train, dropout_rate, &rng);
      const auto target = one_hot(rec->label, classes);
      auto& out = sig[static_cast<std::size_t>(s)];
      out.record = rec;
      out.error = squared_error(trace.probabilities, target);
      out.correct = argmax(trace.probabilities) == rec->label;
      out.dy = logit_gradient(trace.probabilities, target);
      out.dfeat = feature_gradient(trace, out.dy, params);
      out.fc_input = trace.fc_input;
      out.argmax.resize(feat);
      for (std::size_t f = 0; f < feat; ++f) out.argmax[f] = trace.kernels[f].argmax;
    });
  }
  errors.rethrow_first();

  // Phase 2: each coordinate is owned by one thread and summed in sample order.
  const auto feat_n = static_cast<std::ptrdiff_t>(feat);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t fi = 0; fi < feat_n; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    auto gw = grads.fc_weight.row(f);
    for (const auto& s : sig) {
      for (std::size_t l = 0; l < classes; ++l) gw[l] += s.fc_input[f] * s.dy[l];
    }
  }
  for (const auto& s : sig) {
    for (std::size_t l = 0; l < classes; ++l) grads.fc_bias[l] += s.dy[l];
  }

  // (bank, kernel) for each feature index
  std::vector<std::pair<std::size_t, std::size_t>> owner;
  owner.reserve(feat);
  for (std::size_t b = 0; b < params.conv.size(); ++b) {
    for (std::size_t k = 0; k < params.conv[b].kernels(); ++k) owner.emplace_back(b, k);
  }

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t fi = 0; fi < feat_n; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    const auto [b, k] = owner[f];
    const std::size_t h = params.conv[b].height;
    auto dw = grads.conv[b].weight.row(k);
    double db = 0.0;
    for (const auto& s : sig) {
      const double gk = s.dfeat[f];
      if (gk == 0.0) continue;
      const std::size_t a = s.argmax[f];
      for (std::size_t i = 0; i < h; ++i) {
        const TokenId id = s.record->ids[a + i];
        if (id == Vocabulary::pad_id) continue;  // zero rows contribute exactly zero
        const auto x = params.embedding.row(static_cast<std::size_t>(id));
        for (std::size_t j = 0; j < d; ++j) dw[i * d + j] += gk * x[j];
      }
      db += gk;
    }
    grads.conv[b].bias[k] = db;
  }

  // Embedding rows: threads split the columns, so every entry still sees
  // the contributions in (sample, feature, row-in-window) order.
#pragma omp parallel
  {
    const auto nt = static_cast<std::size_t>(omp_get_num_threads());
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t c0 = d * t / nt;
    const std::size_t c1 = d * (t + 1) / nt;
    if (c0 < c1) {
      for (const auto& s : sig) {
        for (std::size_t f = 0; f < feat; ++f) {
          const double gk = s.dfeat[f];
          if (gk == 0.0) continue;
          const auto [b, k] = owner[f];
          const auto& bank = params.conv[b];
          const auto w = bank.weight.row(k);
          const std::size_t a = s.argmax[f];
          for (std::size_t i = 0; i < bank.height; ++i) {
            const TokenId id = s.record->ids[a + i];
            if (id == Vocabulary::pad_id) continue;
            auto row = grads.embedding.row(static_cast<std::size_t>(id));
            for (std::size_t j = c0; j < c1; ++j) row[j] += gk * w[i * d + j];
          }
        }
      }
    }
  }

  finish_batch_gradient(grads, params, batch.size(), l2_coeff);

  BatchStats stats;
  for (const auto& s : sig) {
    stats.loss += s.error;
    stats.correct += s.correct ? 1 : 0;
  }
  stats.loss += l2_coeff * squared_norm(params.fc_weight.data);
  return stats;
}

BatchStats batch_gradient_reference(const ModelParams& params, std::span<const EncodedRecord* const> batch,
                                    double l2_coeff, double dropout_rate, std::uint64_t dropout_seed,
                                    Gradients& grads) {
  check_batch(params, batch);
  resize_like(grads, params);
  BatchStats stats;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    Rng rng(mix_seed(dropout_seed, static_cast<std::uint64_t>(s)));
    const auto trace = forward(batch[s]->ids, params, Mode::train, dropout_rate, &rng);
    const auto target = one_hot(batch[s]->label, params.config.num_classes);
    stats.loss += squared_error(trace.probabilities, target);
    stats.correct += argmax(trace.probabilities) == batch[s]->label ? 1 : 0;
    const auto g = backward(trace, target, params, 0.0);
    auto dst = tensors(grads);
    const auto src = tensors(g);
    for (std::size_t t = 0; t < dst.size(); ++t) {
      for (std::size_t i = 0; i < dst[t].values.size(); ++i) dst[t].values[i] += src[t].values[i];
    }
  }
  finish_batch_gradient(grads, params, batch.size(), l2_coeff);
  stats.loss += l2_coeff * squared_norm(params.fc_weight.data);
  return stats;
}

void sgd_momentum_step(ModelParams& params, const Gradients& grads, Velocity& velocity, double momentum,
                       double learning_rate) {
  auto w = tensors(params);
  const auto g = tensors(grads);
  auto v = tensors(velocity);
  if (w.size() != g.size() || w.size() != v.size()) throw ShapeError("gradient/velocity layout differs from params");
  for (std::size_t t = 0; t < w.size(); ++t) {
    if (w[t].values.size() != g[t].values.size() || w[t].values.size() != v[t].values.size()) {
      throw ShapeError("shape mismatch in tensor " + w[t].name);
    }
    for (double x : g[t].values) {
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in " + w[t].name);
    }
  }
  const std::size_t d = params.config.embedding_dim;
  for (std::size_t t = 0; t < w.size(); ++t) {
    // tensor 0 is the embedding; skip the pad row
    const std::size_t skip = t == 0 ? d : 0;
    kernels::momentum_update(w[t].values.subspan(skip), g[t].values.subspan(skip), v[t].values.subspan(skip), momentum,
                             learning_rate);
  }
}

void clamp_max_norm(ModelParams& params, double max_norm) {
  auto& w = params.fc_weight;
  for (std::size_t l = 0; l < w.cols; ++l) {
    double n2 = 0.0;
    for (std::size_t f = 0; f < w.rows; ++f) n2 += w(f, l) * w(f, l);
    const double n = std::sqrt(n2);
    if (n > max_norm) {
      const double scale = max_norm / n;
      for (std::size_t f = 0; f < w.rows; ++f) w(f, l) *= scale;
    }
  }
}

double accuracy(const ModelParams& params, std::span<const EncodedRecord> data) {
  if (data.empty()) return 0.0;
  long long correct = 0;
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  detail::IterationErrors errors(data.size());
#pragma omp parallel for schedule(dynamic) reduction(+ : correct)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    errors.run(static_cast<std::size_t>(i), [&] {
      const auto& r = data[static_cast<std::size_t>(i)];
      const auto t = forward(r.ids, params, Mode::infer);
      if (argmax(t.probabilities) == r.label) ++correct;
    });
  }
  errors.rethrow_first();
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(std::span<const EncodedRecord> data, std::size_t vocab_size, const TrainConfig& config,
                  std::span<const EncodedRecord> heldout, const EpochCallback& on_epoch) {
  config.validate();
  if (data.empty()) throw DataError("training set is empty");
  for (const auto& r : data) {
    if (r.label >= config.model.num_classes) throw DataError("label out of range for the configured class count");
    if (r.ids.size() != config.model.seq_len) throw DataError("record length differs from seq_len");
  }

  TrainResult result;
  result.params = init_params(config.model, vocab_size, config.seed);
  auto& params = result.params;
  Velocity velocity = zeros_like(params);
  Gradients grads = zeros_like(params);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffler(mix_seed(config.seed, 0x5eed));
  std::vector<const EncodedRecord*> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    shuffler.shuffle(std::span(order));

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&data[order[i]]);

      const auto seed = mix_seed(mix_seed(config.seed, epoch), batches);
      const auto stats = batch_gradient(params, batch, config.l2_coeff, config.dropout_rate, seed, grads);
      if (!std::isfinite(stats.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1));
      }
      sgd_momentum_step(params, grads, velocity, config.momentum, config.learning_rate);
      if (config.max_norm_clamp) clamp_max_norm(params, config.max_norm);

      loss_sum += stats.loss / static_cast<double>(batch.size());
      correct += stats.correct;
      ++batches;
    }

    EpochStats e;
    e.epoch = epoch;
    e.mean_loss = loss_sum / static_cast<double>(batches);
    e.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    if (!heldout.empty()) e.heldout_accuracy = accuracy(params, heldout);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return result;
}

namespace {

using Wide = long double;

// Extended-precision copy of the parameters in canonical tensor order, used
// as the finite-difference reference: the loss difference at epsilon=1e-5
// sits a few ulps above double rounding for small gradients.
struct WideParams {
  const ModelConfig& config;
  std::vector<std::vector<Wide>> t;  // embedding, (conv weight, conv bias)..., fc weight, fc bias

  WideParams(const ModelParams& params) : config(params.config) {
    for (const auto& ref : tensors(params)) t.emplace_back(ref.values.begin(), ref.values.end());
  }
};

struct LossParts {
  Wide error = 0.0L;  // batch-mean squared error
  Wide reg = 0.0L;
};

// `signature` receives, per kernel, the pooled argmax and whether it passed
// the ReLU; a change between w and w+-epsilon marks a kink.
Wide wide_squared_error(const WideParams& w, const EncodedRecord& r, std::vector<std::size_t>& signature) {
  const auto& cfg = w.config;
  const std::size_t d = cfg.embedding_dim, n = r.ids.size(), k = cfg.kernels_per_height;
  std::vector<Wide> features;
  for (std::size_t b = 0; b < cfg.kernel_heights.size(); ++b) {
    const std::size_t h = cfg.kernel_heights[b];
    const auto& weight = w.t[1 + 2 * b];
    const auto& bias = w.t[2 + 2 * b];
    for (std::size_t j = 0; j < k; ++j) {
      Wide best = 0.0L;
      std::size_t at = 0;
      for (std::size_t p = 0; p + h <= n; ++p) {
        Wide s = bias[j];
        for (std::size_t i = 0; i < h; ++i) {
          const auto id = static_cast<std::size_t>(r.ids[p + i]);
          if (id == Vocabulary::pad_id) continue;
          for (std::size_t c = 0; c < d; ++c) s += weight[j * h * d + i * d + c] * w.t[0][id * d + c];
        }
        if (p == 0 || s > best) best = s, at = p;
      }
      signature.push_back(2 * at + (best > 0.0L));
      features.push_back(std::max(best, 0.0L));
    }
  }
  const auto& fc = w.t[w.t.size() - 2];
  const auto& fc_bias = w.t.back();
  const std::size_t classes = cfg.num_classes;
  std::vector<Wide> logits(fc_bias.begin(), fc_bias.end());
  for (std::size_t f = 0; f < features.size(); ++f) {
    for (std::size_t c = 0; c < classes; ++c) logits[c] += fc[f * classes + c] * features[f];
  }
  const Wide top = *std::max_element(logits.begin(), logits.end());
  Wide z = 0.0L;
  for (auto& v : logits) z += (v = std::exp(v - top));
  Wide err = 0.0L;
  for (std::size_t c = 0; c < classes; ++c) {
    const Wide diff = logits[c] / z - (c == r.label ? 1.0L : 0.0L);
    err += diff * diff;
  }
  return err;
}

LossParts batch_mean_loss(const WideParams& w, std::span<const EncodedRecord> batch, Wide l2_coeff,
                          std::vector<std::size_t>& signature) {
  LossParts parts;
  signature.clear();
  for (const auto& r : batch) parts.error += wide_squared_error(w, r, signature);
  parts.error /= static_cast<Wide>(batch.size());
  for (Wide v : w.t[w.t.size() - 2]) parts.reg += v * v;
  parts.reg *= l2_coeff;
  return parts;
}

}  // namespace

GradCheckResult grad_check(const ModelParams& params, std::span<const EncodedRecord> batch, double epsilon,
                           double l2_coeff, std::uint64_t seed, std::size_t per_tensor) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  std::vector<const EncodedRecord*> ptrs;
  for (const auto& r : batch) ptrs.push_back(&r);

  Gradients analytic;
  batch_gradient(params, ptrs, l2_coeff, 0.0, 0, analytic);

  WideParams work(params);
  const auto names = tensors(params);
  const auto grad_tensors = tensors(analytic);
  Rng rng(seed);

  std::set<TokenId> present{Vocabulary::pad_id};
  for (const auto& r : batch) present.insert(r.ids.begin(), r.ids.end());
  const std::vector<TokenId> rows(present.begin(), present.end());
  const std::size_t d = params.config.embedding_dim;

  GradCheckResult result;
  for (std::size_t t = 0; t < work.t.size(); ++t) {
    auto& values = work.t[t];
    const std::string& name = names[t].name;
    const std::size_t size = values.size();

    // Candidates in random order; embedding rows are limited to those the
    // batch touches, plus the pad row.
    std::vector<std::size_t> candidates;
    if (t == 0) {
      for (TokenId row : rows) {
        for (std::size_t c = 0; c < d; ++c) candidates.push_back(static_cast<std::size_t>(row) * d + c);
      }
    } else {
      candidates.resize(size);
      std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    rng.shuffle(std::span(candidates));

    const bool fc = name.starts_with("fc.");
    double worst = 0.0;
    std::size_t checked = 0;
    std::vector<std::size_t> base_sig, plus_sig, minus_sig;
    batch_mean_loss(work, batch, l2_coeff, base_sig);
    for (std::size_t idx : candidates) {
      if (checked == per_tensor) break;
      const Wide orig = values[idx];
      values[idx] = orig + epsilon;
      const auto plus = batch_mean_loss(work, batch, l2_coeff, plus_sig);
      values[idx] = orig - epsilon;
      const auto minus = batch_mean_loss(work, batch, l2_coeff, minus_sig);
      values[idx] = orig;
      if (plus_sig != base_sig || minus_sig != base_sig) {
        ++result.kinks_skipped;  // a pooling or ReLU switch inside [w-eps, w+eps]
        continue;
      }
      // difference each part separately so the O(1) error term's rounding
      // does not swamp the small regularizer slope
      const auto numeric =
          static_cast<double>(((plus.error - minus.error) + (plus.reg - minus.reg)) / (2.0L * epsilon));
      const double err = relative_error(grad_tensors[t].values[idx], numeric);
      worst = std::max(worst, err);
      ++checked;
    }
    result.coordinates += checked;
    result.per_tensor.emplace_back(name, worst);
    result.max_rel_error = std::max(result.max_rel_error, worst);
    if (fc) result.max_rel_error_fc = std::max(result.max_rel_error_fc, worst);
  }
  return result;
}

std::vector<EncodedRecord> random_batch(const ModelConfig& config, std::size_t vocab_size, std::size_t count,
                                        std::uint64_t seed) {
  if (vocab_size < 2) throw ConfigError("vocabulary must hold at least the pad and unk tokens");
  Rng rng(seed);
  std::vector<EncodedRecord> out(count);
  const std::size_t lo = std::max<std::size_t>(1, config.seq_len / 2);
  for (auto& r : out) {
    const std::size_t len = lo + rng.below(config.seq_len - lo + 1);
    r.ids.assign(config.seq_len, Vocabulary::pad_id);
    for (std::size_t i = 0; i < len; ++i) r.ids[i] = static_cast<TokenId>(1 + rng.below(vocab_size - 1));
    r.label = rng.below(config.num_classes);
  }
  return out;
}

}  // namespace tcnn
