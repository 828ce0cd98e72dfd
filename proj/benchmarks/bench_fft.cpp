#include <benchmark/benchmark.h>

#include <random>

#include "fan/spectral.hpp"

namespace {

std::vector<double> random_series(std::size_t n) {
  std::mt19937_64 rng(n);
  std::uniform_int_distribution<int> count(0, 8);
  std::vector<double> s(n);
  for (auto& v : s) v = count(rng);
  return s;
}

void BM_Fft(benchmark::State& state) {
  const auto s = random_series(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fan::fft(s));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Fft)->RangeMultiplier(2)->Range(8, 1024)->Complexity(benchmark::oNLogN);

void BM_DftBrute(benchmark::State& state) {
  const auto s = random_series(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fan::dft_brute(s));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DftBrute)->RangeMultiplier(2)->Range(8, 1024)->Complexity(benchmark::oNSquared);

// The per-sample path: fit a raw series to N points, then transform.
void BM_FitAndTransform32(benchmark::State& state) {
  const auto raw = random_series(45);
  for (auto _ : state) {
    const auto fitted = fan::fit_to_length(raw, 32);
    benchmark::DoNotOptimize(fan::fft(fitted));
  }
}
BENCHMARK(BM_FitAndTransform32);

}  // namespace

BENCHMARK_MAIN();
