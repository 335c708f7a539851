#include <benchmark/benchmark.h>

#include "srlora/adapter.hpp"
#include "srlora/kernels.hpp"
#include "srlora/linalg.hpp"

using namespace srlora;

static void BM_GemmSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = gaussian(rng, n, n, 0.0, 1.0);
  const Matrix b = gaussian(rng, n, n, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::gemm(a, kernels::Op::none, b, kernels::Op::none));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

static void BM_GemmOmp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = gaussian(rng, n, n, 0.0, 1.0);
  const Matrix b = gaussian(rng, n, n, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::omp::gemm(a, kernels::Op::none, b, kernels::Op::none));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
  state.counters["threads"] = kernels::omp::max_threads();
}

static void BM_GemmTransposedOmp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Matrix a = gaussian(rng, n, n, 0.0, 1.0);
  const Matrix b = gaussian(rng, n, n, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::omp::gemm(a, kernels::Op::transpose, b, kernels::Op::none));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

static void BM_LoraForward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const LoraLinear layer = pissa_init(gaussian(rng, d, d, 0.0, 1.0), 8, 8.0);
  const Matrix x = gaussian(rng, d, 64, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(forward(layer, x));
}

static void BM_Svd(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const Matrix w = gaussian(rng, d, d, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(svd(w));
}

BENCHMARK(BM_GemmSerial)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmOmp)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmTransposedOmp)->Arg(128);
BENCHMARK(BM_LoraForward)->Arg(64)->Arg(256);
BENCHMARK(BM_Svd)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
