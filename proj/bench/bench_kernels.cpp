// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "tcnn/kernels.hpp"
#include "tcnn/rng.hpp"
#include "tcnn/training.hpp"

namespace {

using namespace tcnn;

ModelConfig bench_config(bool full) {
  return full ? ModelConfig::full(6) : ModelConfig::desk(6);
}

template <auto Conv>
void BM_ConvBank(benchmark::State& state) {
  const auto cfg = bench_config(state.range(0) != 0);
  const auto params = init_params(cfg, 500, 1);
  const auto batch = random_batch(cfg, 500, 1, 2);
  const auto x = embed(batch[0].ids, params);
  const auto& bank = params.conv.front();
  std::vector<KernelTrace> out(bank.weight.rows);
  for (auto _ : state) {
    Conv(x, bank, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetLabel(state.range(0) ? "full" : "desk");
}

template <auto Grad>
void BM_BatchGradient(benchmark::State& state) {
  const auto cfg = bench_config(state.range(0) != 0);
  const auto params = init_params(cfg, 500, 1);
  const auto records = random_batch(cfg, 500, 64, 3);
  std::vector<const EncodedRecord*> batch;
  for (const auto& r : records) batch.push_back(&r);
  Gradients grads;
  for (auto _ : state) {
    auto stats = Grad(params, batch, 1e-4, 0.5, 11, grads);
    benchmark::DoNotOptimize(stats);
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(batch.size()));
  state.SetLabel(state.range(0) ? "full" : "desk");
}

BENCHMARK_TEMPLATE(BM_ConvBank, kernels::conv_bank_reference)->Arg(0)->Arg(1);
BENCHMARK_TEMPLATE(BM_ConvBank, kernels::conv_bank_parallel)->Arg(0)->Arg(1);
BENCHMARK_TEMPLATE(BM_BatchGradient, batch_gradient_reference)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_BatchGradient, batch_gradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
