// SPDX-License-Identifier: Apache-2.0
#include "tcnn/kernels.hpp"

#include <cassert>
#include <cstddef>

namespace tcnn::kernels {
namespace {

void relu_and_pool(KernelTrace& t) {
  t.post.resize(t.pre.size());
  std::size_t best = 0;
  for (std::size_t p = 0; p < t.pre.size(); ++p) {
    t.post[p] = t.pre[p] > 0.0 ? t.pre[p] : 0.0;
    if (t.post[p] > t.post[best]) best = p;
  }
  t.argmax = best;
}

}  // namespace

void conv_bank_reference(const Matrix& x, const ConvBank& bank, std::span<KernelTrace> out) {
  assert(out.size() == bank.kernels());
  const std::size_t h = bank.height;
  const std::size_t d = x.cols;
  const std::size_t positions = x.rows - h + 1;
  for (std::size_t k = 0; k < bank.kernels(); ++k) {
    const auto w = bank.weight.row(k);
    auto& t = out[k];
    t.pre.assign(positions, 0.0);
    for (std::size_t p = 0; p < positions; ++p) {
      double s = 0.0;
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < d; ++j) s += w[i * d + j] * x(p + i, j);
      }
      t.pre[p] = s + bank.bias[k];
    }
    relu_and_pool(t);
  }
}

void conv_bank_parallel(const Matrix& x, const ConvBank& bank, std::span<KernelTrace> out) {
  assert(out.size() == bank.kernels());
  const std::size_t h = bank.height;
  const std::size_t window = h * x.cols;
  const std::size_t positions = x.rows - h + 1;
  const auto kernels = static_cast<std::ptrdiff_t>(bank.kernels());
  const bool big = bank.kernels() * positions * window > (1u << 16);

#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t k = 0; k < kernels; ++k) {
    const double* w = bank.weight.row(static_cast<std::size_t>(k)).data();
    const double b = bank.bias[static_cast<std::size_t>(k)];
    auto& t = out[static_cast<std::size_t>(k)];
    t.pre.resize(positions);
    for (std::size_t p = 0; p < positions; ++p) {
      const double* xs = x.data.data() + p * x.cols;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t i = 0; i < window; ++i) s += w[i] * xs[i];
      t.pre[p] = s + b;
    }
    relu_and_pool(t);
  }
}

void momentum_update(std::span<double> weights, std::span<const double> grads, std::span<double> velocity,
                     double momentum, double learning_rate) {
  assert(weights.size() == grads.size() && weights.size() == velocity.size());
  const auto n = static_cast<std::ptrdiff_t>(weights.size());
  double* w = weights.data();
  double* v = velocity.data();
  const double* g = grads.data();
#pragma omp parallel for simd schedule(static) if (n > (1 << 15))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    v[i] = momentum * v[i] - learning_rate * g[i];
    w[i] += v[i];
  }
}

}  // namespace tcnn::kernels
