#include <benchmark/benchmark.h>

#include "shopalign/embed.hpp"

using namespace shopalign;

namespace {

std::vector<corpus::Session> make_corpus(int sessions, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<corpus::Session> out;
  out.reserve(static_cast<std::size_t>(sessions));
  for (int i = 0; i < sessions; ++i) {
    corpus::Session s;
    s.session_id = "s" + std::to_string(i);
    s.shop_id = "A";
    const int len = 3 + static_cast<int>(rng.index(6));
    for (int e = 0; e < len; ++e) {
      s.products.push_back("p" + std::to_string(rng.index(static_cast<std::uint64_t>(vocab))));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

static void BM_CbowTrainEpoch(benchmark::State& state) {
  const auto sessions = make_corpus(static_cast<int>(state.range(0)), 200, 3);
  embed::TrainConfig cfg;
  cfg.dimension = 48;
  cfg.epochs = 1;
  cfg.min_count = 1;
  std::size_t tokens = 0;
  for (auto _ : state) {
    embed::TrainStats stats;
    benchmark::DoNotOptimize(embed::train(sessions, cfg, &stats));
    tokens += stats.instances_per_epoch;
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(tokens));
}
BENCHMARK(BM_CbowTrainEpoch)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_NearestNeighbors(benchmark::State& state) {
  const auto sessions = make_corpus(400, static_cast<int>(state.range(0)), 5);
  embed::TrainConfig cfg;
  cfg.dimension = 48;
  cfg.epochs = 1;
  cfg.min_count = 1;
  const auto table = embed::train(sessions, cfg);
  Rng rng(7);
  Vec query(48);
  for (int i = 0; i < 48; ++i) query(i) = rng.gaussian();
  for (auto _ : state) {
    benchmark::DoNotOptimize(embed::nearest_neighbors(query, table, 10));
  }
  state.SetItemsProcessed(state.iterations() * table.size());
}
BENCHMARK(BM_NearestNeighbors)->Arg(200)->Arg(1000);

static void BM_NegativeSampler(benchmark::State& state) {
  std::vector<std::string> products;
  std::vector<std::int64_t> counts;
  for (int i = 0; i < 1000; ++i) {
    products.push_back("p" + std::to_string(i));
    counts.push_back(1 + 1000 / (i + 1));
  }
  const corpus::Vocabulary vocab(products, counts);
  const auto sampler = embed::build_negative_sampler(vocab, 0.75);
  Rng rng(9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sampler.sample(rng));
  }
}
BENCHMARK(BM_NegativeSampler);
