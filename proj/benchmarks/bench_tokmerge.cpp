#include <benchmark/benchmark.h>

#include <random>

#include "capeval/tokmerge.hpp"

using namespace capeval::tokmerge;

namespace {

TokenMatrix random_tokens(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::vector<double> data(n * d);
  for (auto& x : data) x = g(rng);
  return TokenMatrix(n, d, std::move(data));
}

void BM_BipartiteSoftMatch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto keys = random_tokens(n, 64);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bipartite_soft_match(keys, n / 4));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_BipartiteSoftMatch)->RangeMultiplier(2)->Range(64, 1024)->Complexity();

void BM_RunLayers(benchmark::State& state) {
  const auto layers = static_cast<std::size_t>(state.range(0));
  const auto schedule = compute_schedule(378, 378, 14, layers, 0.1);
  const auto tokens = random_tokens(729, 64);
  const SizeVector sizes(729, 1);
  const auto keys = self_keys();
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_layers(tokens, sizes, keys, schedule));
  }
}
BENCHMARK(BM_RunLayers)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
