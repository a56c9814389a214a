// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "tcnn/dropout.hpp"
#include "tcnn/error.hpp"
#include "tcnn/training.hpp"

using namespace tcnn;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.embedding_dim = 8;
  c.seq_len = 10;
  c.kernel_heights = {2, 3};
  c.kernels_per_height = 4;
  c.num_classes = 3;
  return c;
}

std::vector<const EncodedRecord*> pointers(const std::vector<EncodedRecord>& v) {
  std::vector<const EncodedRecord*> out;
  for (const auto& r : v) out.push_back(&r);
  return out;
}

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
  double worst = 0.0;
  const auto ta = tensors(a), tb = tensors(b);
  for (std::size_t t = 0; t < ta.size(); ++t) {
    for (std::size_t i = 0; i < ta[t].values.size(); ++i) {
      worst = std::max(worst, std::abs(ta[t].values[i] - tb[t].values[i]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("one_hot") {
  CHECK(one_hot(2, 6) == std::vector<double>{0, 0, 1, 0, 0, 0});
  CHECK(one_hot(0, 1) == std::vector<double>{1});
  CHECK_THROWS_AS(one_hot(5, 3), ShapeError);
}

TEST_CASE("loss examples") {
  const std::vector<std::vector<double>> t{{0, 1}, {1, 0}};
  CHECK(loss(t, t, Matrix(2, 2), 0.3) == 0.0);

  const std::vector<std::vector<double>> p{std::vector<double>(6, 1.0 / 6)};
  const std::vector<std::vector<double>> tt{one_hot(0, 6)};
  CHECK(loss(p, tt, Matrix(1, 1), 0.0) == doctest::Approx(5.0 / 6).epsilon(1e-15));

  CHECK(loss(t, t, Matrix(2, 2, 1.0), 0.5) == 2.0);

  const std::vector<std::vector<double>> one{{1, 0}};
  CHECK_THROWS_AS(loss(one, t, Matrix(2, 2), 0.0), ShapeError);
  CHECK_THROWS_AS(loss({}, {}, Matrix(2, 2), 0.0), ShapeError);
}

TEST_CASE("loss is nonnegative and zero only at the perfect, unweighted point") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<double>> p(3), t(3);
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<double> y(4);
      for (auto& v : y) v = rng.uniform(-3, 3);
      p[s] = softmax(y);
      t[s] = one_hot(rng.below(4), 4);
    }
    Matrix w(3, 4);
    for (auto& v : w.data) v = rng.uniform(-1, 1);
    CHECK(loss(p, t, w, 0.1) > 0.0);
  }
}

TEST_CASE("dropout") {
  const std::vector<double> f{1.0, 2.0, 3.0, -4.0};
  Rng rng(1);
  auto r = apply_dropout(f, 0.0, &rng, Mode::train);
  CHECK(r.values == f);
  REQUIRE(r.mask.has_value());
  CHECK(*r.mask == std::vector<double>(4, 1.0));

  r = apply_dropout(f, 0.7, nullptr, Mode::infer);
  CHECK(r.values == f);
  CHECK_FALSE(r.mask.has_value());

  CHECK_THROWS_AS(apply_dropout(f, 1.0, &rng, Mode::train), ConfigError);
  CHECK_THROWS_AS(apply_dropout(f, -0.1, &rng, Mode::train), ConfigError);

  // E[F'] = F; per-entry std of the draw is |F| at rate 0.5
  constexpr int kDraws = 20000;
  std::vector<double> mean(4, 0.0);
  for (int i = 0; i < kDraws; ++i) {
    const auto d = apply_dropout(f, 0.5, &rng, Mode::train);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK((d.values[k] == 0.0 || d.values[k] == 2.0 * f[k]));
      mean[k] += d.values[k] / kDraws;
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(std::abs(mean[k] - f[k]) < 3.0 * std::abs(f[k]) / std::sqrt(double(kDraws)));
  }
}

TEST_CASE("backward: zero error signal gives zero error gradients") {
  const auto cfg = tiny_config();
  const auto p = init_params(cfg, 20, 3);
  const auto batch = random_batch(cfg, 20, 1, 4);
  auto trace = forward(batch[0].ids, p, Mode::infer);
  const auto target = one_hot(batch[0].label, cfg.num_classes);
  trace.probabilities = target;
  const auto g = backward(trace, target, p, 0.0);
  for (const auto& t : tensors(g)) {
    for (double v : t.values) CHECK(v == 0.0);
  }
}

TEST_CASE("backward: embedding rows absent from the input get zero gradient") {
  const auto cfg = tiny_config();
  const auto p = init_params(cfg, 40, 3);
  const auto batch = random_batch(cfg, 40, 1, 9);
  const auto trace = forward(batch[0].ids, p, Mode::infer);
  const auto g = backward(trace, one_hot(batch[0].label, cfg.num_classes), p, 1e-3);
  const std::set<TokenId> present(batch[0].ids.begin(), batch[0].ids.end());
  for (std::size_t r = 0; r < g.embedding.rows; ++r) {
    if (r == 0 || !present.contains(static_cast<TokenId>(r))) {
      for (double v : g.embedding.row(r)) CHECK(v == 0.0);
    }
  }
  CHECK_THROWS_AS(backward(trace, one_hot(0, 2), p, 0.0), ShapeError);
}

TEST_CASE("gradient check on the tiny config") {
  const auto cfg = tiny_config();
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto p = init_params(cfg, 25, seed);
    const auto batch = random_batch(cfg, 25, 3, seed + 100);
    const auto r = grad_check(p, batch, 1e-5, 1e-3, seed, 80);
    CAPTURE(seed);
    CHECK(r.coordinates >= 200);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.max_rel_error_fc < 1e-6);
    for (const auto& [name, e] : r.per_tensor) {
      if (name == "fc.bias") CHECK(e < 1e-6);
    }
  }
}

TEST_CASE("gradient check skips a coordinate sitting on a ReLU kink") {
  const auto cfg = tiny_config();
  auto p = init_params(cfg, 25, 8);
  const auto batch = random_batch(cfg, 25, 1, 81);
  // Shift the first kernel's bias so its pooled pre-activation lands on zero.
  const auto trace = forward(batch[0].ids, p, Mode::infer);
  const auto& pre = trace.kernels[0].pre;
  p.conv[0].bias[0] -= *std::max_element(pre.begin(), pre.end());
  const auto r = grad_check(p, batch, 1e-5, 1e-3, 3, 1000);
  CHECK(r.kinks_skipped >= 1);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("pad row: numeric and analytic gradients are both zero") {
  const auto cfg = tiny_config();
  auto p = init_params(cfg, 25, 6);
  const auto batch = random_batch(cfg, 25, 2, 60);
  Gradients g;
  batch_gradient(p, pointers(batch), 0.0, 0.0, 0, g);
  for (double v : g.embedding.row(0)) CHECK(v == 0.0);
  const auto before = forward(batch[0].ids, p, Mode::infer).probabilities;
  p.embedding(0, 3) += 1e-3;
  CHECK(forward(batch[0].ids, p, Mode::infer).probabilities == before);
}

TEST_CASE("parallel batch gradient matches the serial reference and ignores thread count") {
  const auto cfg = tiny_config();
  const auto p = init_params(cfg, 30, 8);
  const auto batch = random_batch(cfg, 30, 7, 80);
  const auto ptrs = pointers(batch);

  Gradients a, b;
  const auto sa = batch_gradient(p, ptrs, 1e-3, 0.5, 1234, a);
  const auto sb = batch_gradient_reference(p, ptrs, 1e-3, 0.5, 1234, b);
  CHECK(sa.correct == sb.correct);
  CHECK(sa.loss == doctest::Approx(sb.loss).epsilon(1e-13));
  CHECK(max_abs_diff(a, b) < 1e-14);

  const int saved = omp_get_max_threads();
  Gradients one, four;
  omp_set_num_threads(1);
  batch_gradient(p, ptrs, 1e-3, 0.5, 99, one);
  omp_set_num_threads(4);
  batch_gradient(p, ptrs, 1e-3, 0.5, 99, four);
  omp_set_num_threads(saved);
  CHECK(one == four);
}

TEST_CASE("sgd momentum step arithmetic") {
  ModelConfig cfg = tiny_config();
  auto p = init_params(cfg, 3, 1);
  auto v = zeros_like(p);
  auto g = zeros_like(p);
  p.fc_bias[0] = 1.0;
  g.fc_bias[0] = 0.5;
  sgd_momentum_step(p, g, v, 0.9, 0.1);
  CHECK(v.fc_bias[0] == doctest::Approx(-0.05).epsilon(1e-15));
  CHECK(p.fc_bias[0] == doctest::Approx(0.95).epsilon(1e-15));
  g.fc_bias[0] = 0.0;
  sgd_momentum_step(p, g, v, 0.9, 0.1);
  CHECK(v.fc_bias[0] == doctest::Approx(-0.045).epsilon(1e-15));
  CHECK(p.fc_bias[0] == doctest::Approx(0.905).epsilon(1e-15));

  // fixed point
  auto q = init_params(cfg, 3, 2);
  const auto q0 = q;
  auto zv = zeros_like(q);
  sgd_momentum_step(q, zeros_like(q), zv, 0.9, 0.1);
  CHECK(q == q0);

  // alpha = 0 is plain gradient descent
  auto r = init_params(cfg, 3, 2);
  auto rg = zeros_like(r);
  for (auto& t : tensors(rg)) for (auto& x : t.values) x = 0.25;
  auto rv = zeros_like(r);
  for (auto& t : tensors(rv)) for (auto& x : t.values) x = 7.0;  // discarded when alpha = 0
  const auto r0 = r;
  sgd_momentum_step(r, rg, rv, 0.0, 0.2);
  CHECK(r.fc_weight(1, 1) == doctest::Approx(r0.fc_weight(1, 1) - 0.05).epsilon(1e-15));
  for (double x : r.embedding.row(0)) CHECK(x == 0.0);
  for (double x : rv.fc_bias) CHECK(x == doctest::Approx(-0.05));

  auto bad = zeros_like(p);
  bad.conv[0].bias[1] = std::nan("");
  const auto snapshot = p;
  CHECK_THROWS_AS(sgd_momentum_step(p, bad, v, 0.9, 0.1), NumericError);
  CHECK(p == snapshot);
}

TEST_CASE("max-norm clamp bounds every class column") {
  auto p = init_params(tiny_config(), 3, 1);
  for (auto& x : p.fc_weight.data) x = 2.0;
  clamp_max_norm(p, 3.0);
  for (std::size_t l = 0; l < p.fc_weight.cols; ++l) {
    double n2 = 0.0;
    for (std::size_t f = 0; f < p.fc_weight.rows; ++f) n2 += p.fc_weight(f, l) * p.fc_weight(f, l);
    CHECK(std::sqrt(n2) == doctest::Approx(3.0));
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.momentum = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("one epoch on a short dataset is exactly one step") {
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.epochs = 1;
  cfg.batch_size = 64;
  cfg.dropout_rate = 0.0;
  const auto data = random_batch(cfg.model, 20, 10, 5);
  const auto result = train(data, 20, cfg);
  REQUIRE(result.history.size() == 1);

  auto manual = init_params(cfg.model, 20, cfg.seed);
  Gradients g;
  batch_gradient(manual, pointers(data), cfg.l2_coeff, 0.0, 0, g);
  auto v = zeros_like(manual);
  sgd_momentum_step(manual, g, v, cfg.momentum, cfg.learning_rate);
  CHECK(max_abs_diff(manual, result.params) < 1e-13);
}

TEST_CASE("training is deterministic, keeps the pad row frozen, and stays finite") {
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.epochs = 3;
  cfg.batch_size = 8;
  const auto data = random_batch(cfg.model, 20, 30, 6);
  std::size_t calls = 0;
  const auto a = train(data, 20, cfg, data, [&](const EpochStats&) { ++calls; });
  const auto b = train(data, 20, cfg);
  CHECK(calls == 3);
  CHECK(a.params == b.params);
  CHECK(a.history.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) CHECK(a.history[e].mean_loss == b.history[e].mean_loss);
  CHECK(a.history[0].heldout_accuracy.has_value());
  for (double v : a.params.embedding.row(0)) CHECK(v == 0.0);
  CHECK(all_finite(a.params));

  std::vector<EncodedRecord> bad = data;
  bad[0].label = 7;
  CHECK_THROWS_AS(train(bad, 20, cfg), DataError);
  CHECK_THROWS_AS(train({}, 20, cfg), DataError);
}

TEST_CASE("a diverging run aborts with a numeric error") {
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.learning_rate = 1e200;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  const auto data = random_batch(cfg.model, 20, 16, 6);
  CHECK_THROWS_AS(train(data, 20, cfg), NumericError);
}
