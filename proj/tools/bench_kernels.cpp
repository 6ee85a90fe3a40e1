// Copyright 2026 The gatectl Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against their OpenMP counterparts. Run with
// OMP_NUM_THREADS set to compare thread counts; the outputs are bit-identical
// either way.

#include <benchmark/benchmark.h>

#include <vector>

#include "gatectl/kernels.hpp"
#include "gatectl/rng.hpp"

namespace {

using gatectl::kernels::ConstMatRef;
using gatectl::kernels::MatRef;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  gatectl::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(ConstMatRef{a, n, n}, ConstMatRef{b, n, n}, MatRef{c, n, n}, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(n * n * n),
                                                 benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

template <auto Attention>
void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t d = 64;
  const auto q = random_buffer(n * d, 3), k = random_buffer(n * d, 4), v = random_buffer(n * d, 5);
  std::vector<double> out(n * d);
  for (auto _ : state) {
    Attention(ConstMatRef{q, n, d}, ConstMatRef{k, n, d}, ConstMatRef{v, n, d}, MatRef{out, n, d});
    benchmark::DoNotOptimize(out.data());
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}

template <auto Linear>
void linear_normalized(ConstMatRef q, ConstMatRef k, ConstMatRef v, MatRef out) {
  Linear(q, k, v, true, 1e-6, out);
}

namespace serial = gatectl::kernels::serial;
namespace parallel = gatectl::kernels::parallel;

BENCHMARK(BM_Gemm<serial::gemm_nn>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_Gemm<parallel::gemm_nn>)->Name("gemm_nn/parallel")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_Gemm<serial::gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_Gemm<parallel::gemm_nt>)->Name("gemm_nt/parallel")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_Gemm<serial::gemm_tn>)->Name("gemm_tn/serial")->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_Gemm<parallel::gemm_tn>)->Name("gemm_tn/parallel")->RangeMultiplier(2)->Range(64, 256);

BENCHMARK(BM_Attention<linear_normalized<serial::linear_attention>>)
    ->Name("linear_attention/serial")->RangeMultiplier(4)->Range(64, 1024)->Complexity();
BENCHMARK(BM_Attention<linear_normalized<parallel::linear_attention>>)
    ->Name("linear_attention/parallel")->RangeMultiplier(4)->Range(64, 1024)->Complexity();
BENCHMARK(BM_Attention<serial::softmax_attention>)
    ->Name("softmax_attention/serial")->RangeMultiplier(4)->Range(64, 1024)->Complexity();
BENCHMARK(BM_Attention<parallel::softmax_attention>)
    ->Name("softmax_attention/parallel")->RangeMultiplier(4)->Range(64, 1024)->Complexity();

}  // namespace

BENCHMARK_MAIN();
