#include <benchmark/benchmark.h>

#include "shopalign/align.hpp"
#include "shopalign/rnn.hpp"

using namespace shopalign;

namespace {

embed::EmbeddingTable random_table(int n, int d, std::uint64_t seed,
                                   const std::string& prefix) {
  Rng rng(seed);
  embed::EmbeddingTable t;
  std::vector<std::string> products;
  std::vector<std::int64_t> counts;
  for (int i = 0; i < n; ++i) {
    products.push_back(prefix + std::to_string(i));
    counts.push_back(1);
  }
  t.vocab = corpus::Vocabulary(products, counts);
  t.u = MatRM(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) t.u(i, j) = rng.gaussian();
  }
  t.v = MatRM::Zero(n, d);
  return t;
}

align::SeedDictionary identity_seed(int n) {
  align::SeedDictionary seed;
  for (int i = 0; i < n; ++i) {
    seed.pairs.push_back({"s" + std::to_string(i), "t" + std::to_string(i), 1.0});
  }
  return seed;
}

}  // namespace

static void BM_ProcrustesFit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto src = random_table(n, 48, 1, "s");
  const auto tgt = random_table(n, 48, 2, "t");
  const auto seed = identity_seed(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(align::procrustes_fit(seed, src, tgt));
  }
}
BENCHMARK(BM_ProcrustesFit)->Arg(100)->Arg(500);

static void BM_DictionaryInduction(benchmark::State& state) {
  const auto src = random_table(230, 48, 1, "s");
  const auto tgt = random_table(420, 48, 2, "t");
  align::AlignmentMap map;
  map.w = Mat::Identity(48, 48);
  for (auto _ : state) {
    benchmark::DoNotOptimize(align::induce_dictionary(map, src, tgt));
  }
}
BENCHMARK(BM_DictionaryInduction)->Unit(benchmark::kMillisecond);

static void BM_GruStep(benchmark::State& state) {
  const int hidden = static_cast<int>(state.range(0));
  Rng rng(3);
  rnn::GruParams cell;
  cell.init(48, hidden, rng);
  Vec x(48), h = Vec::Zero(hidden);
  for (int i = 0; i < 48; ++i) x(i) = rng.gaussian();
  for (auto _ : state) {
    h = rnn::gru_forward(cell, x, h);
    benchmark::DoNotOptimize(h.sum());
  }
}
BENCHMARK(BM_GruStep)->Arg(16)->Arg(64);
