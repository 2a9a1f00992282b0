#include <benchmark/benchmark.h>

#include "shopalign/metrics.hpp"
#include "shopalign/synth.hpp"

using namespace shopalign;

static void BM_NdcgAtK(benchmark::State& state) {
  Rng rng(5);
  std::vector<eval::RankedPrediction> preds;
  for (int i = 0; i < 1000; ++i) {
    eval::RankedPrediction p;
    for (int j = 0; j < 10; ++j) p.ranking.push_back(static_cast<int>(rng.index(400)));
    p.relevant.insert(static_cast<int>(rng.index(400)));
    preds.push_back(std::move(p));
  }
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::ndcg_at_k(preds[i++ % preds.size()], 10));
  }
}
BENCHMARK(BM_NdcgAtK);

static void BM_TruncatedPowerLawWeights(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(synth::truncated_power_law_weights(2.32, 50.0,
                                                                static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_TruncatedPowerLawWeights)->Arg(42)->Arg(1000);

static void BM_PowerLawFit(benchmark::State& state) {
  const auto weights = synth::truncated_power_law_weights(2.32, 50.0, 42);
  const WeightedSampler sampler(weights);
  Rng rng(7);
  std::vector<int> obs;
  obs.reserve(20000);
  for (int i = 0; i < 20000; ++i) obs.push_back(sampler.sample(rng) + 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(synth::fit_power_law_exponent(obs, 42));
  }
}
BENCHMARK(BM_PowerLawFit)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
