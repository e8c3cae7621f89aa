#include <benchmark/benchmark.h>

#include <random>

#include "capeval/textmetrics.hpp"

using namespace capeval::metrics;

namespace {

std::vector<CaptionPair> corpus(std::size_t n) {
  static const char* kWords[] = {"the", "a", "man", "woman", "dog", "walks",
                                 "runs", "park", "street", "camera", "pans",
                                 "slowly", "red", "car", "near", "building"};
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kWords) - 1);
  auto sentence = [&] {
    std::string s;
    for (int i = 0; i < 24; ++i) s += std::string(kWords[pick(rng)]) + " ";
    return s;
  };
  std::vector<CaptionPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"v" + std::to_string(i), sentence(), {sentence(), sentence()}});
  }
  return out;
}

void BM_ScoreCorpus(benchmark::State& state) {
  const auto pairs = corpus(static_cast<std::size_t>(state.range(0)));
  const auto metrics = all_metrics();
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_corpus(pairs, metrics));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScoreCorpus)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
