#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "shopalign/synth.hpp"

using namespace shopalign;
using namespace shopalign::synth;

TEST_CASE("truncated power law weights") {
  SUBCASE("degenerate support of one") {
    const auto w = truncated_power_law_weights(2.32, 100.0, 1);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == doctest::Approx(1.0));
  }
  SUBCASE("alpha 2 with a far cutoff matches the hand normalization") {
    const auto w = truncated_power_law_weights(2.0, 1e9, 3);
    CHECK(w[0] == doctest::Approx(0.7347).epsilon(1e-3));
    CHECK(w[1] == doctest::Approx(0.1837).epsilon(1e-3));
    CHECK(w[2] == doctest::Approx(0.0816).epsilon(1e-3));
  }
  SUBCASE("published exponents are the shop defaults") {
    SynthConfig cfg;
    CHECK(cfg.alpha_a == doctest::Approx(2.32));
    CHECK(cfg.alpha_b == doctest::Approx(2.72));
    CHECK_NOTHROW(cfg.validate());
  }
  SUBCASE("invalid parameters are rejected") {
    CHECK_THROWS_AS(truncated_power_law_weights(0.9, 10.0, 5), ValidationError);
    CHECK_THROWS_AS(truncated_power_law_weights(2.0, 0.1, 5), ValidationError);
  }
}

namespace {

std::vector<int> sample_law(double alpha, double cutoff, int size, int n, std::uint64_t seed) {
  const WeightedSampler sampler(truncated_power_law_weights(alpha, cutoff, size));
  Rng rng(seed);
  std::vector<int> obs;
  obs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) obs.push_back(sampler.sample(rng) + 1);
  return obs;
}

}  // namespace

TEST_CASE("power-law fit recovers planted exponents") {
  SUBCASE("alpha 2.32") {
    const auto obs = sample_law(2.32, 2000.0, 10000, 100000, 1);
    const auto fit = fit_power_law_exponent(obs, 10000);
    CHECK(std::abs(fit.alpha - 2.32) < 0.1);
  }
  SUBCASE("alpha 2.72") {
    const auto obs = sample_law(2.72, 2000.0, 10000, 100000, 2);
    const auto fit = fit_power_law_exponent(obs, 10000);
    CHECK(std::abs(fit.alpha - 2.72) < 0.1);
  }
}

TEST_CASE("power-law fit validates its inputs") {
  SUBCASE("too few observations") {
    CHECK_THROWS_AS(fit_power_law_exponent(std::vector<int>(50, 1)), ValidationError);
  }
  SUBCASE("all-equal observations are degenerate") {
    CHECK_THROWS_AS(fit_power_law_exponent(std::vector<int>(200, 3)), ValidationError);
  }
  SUBCASE("two distinct values are still degenerate") {
    std::vector<int> obs(200, 1);
    for (int i = 0; i < 50; ++i) obs[static_cast<std::size_t>(i)] = 2;
    CHECK_THROWS_AS(fit_power_law_exponent(obs), ValidationError);
  }
  SUBCASE("observations below 1 are invalid") {
    std::vector<int> obs(200, 1);
    obs[0] = 0;
    CHECK_THROWS_AS(fit_power_law_exponent(obs), ValidationError);
  }
}

TEST_CASE("ks_distance is small for matching samples and large for mismatched ones") {
  const auto obs = sample_law(2.32, 50.0, 23, 100000, 3);
  CHECK(ks_distance(obs, 2.32, 50.0, 23) < 0.05);
  CHECK(ks_distance(obs, 1.2, 50.0, 23) > 0.1);
}

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.products_a = 60;
  cfg.products_b = 80;
  cfg.sessions_a = 2500;
  cfg.sessions_b = 3000;
  cfg.rng_seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("generated corpora are deterministic per seed") {
  const auto cfg = small_config();
  const auto d1 = generate_shops(cfg);
  const auto d2 = generate_shops(cfg);
  REQUIRE(d1.events_a.size() == d2.events_a.size());
  for (std::size_t i = 0; i < d1.events_a.size(); ++i) {
    CHECK(d1.events_a[i].product_id == d2.events_a[i].product_id);
    CHECK(d1.events_a[i].session_id == d2.events_a[i].session_id);
  }
}

TEST_CASE("intra-activity probability 1 yields single-activity sessions") {
  auto cfg = small_config();
  cfg.intra_activity_prob = 1.0;
  cfg.sessions_a = 300;
  const auto data = generate_shops(cfg);
  const auto grouped = corpus::sessionize(data.events_a);
  REQUIRE(!grouped.sessions.empty());
  for (const auto& s : grouped.sessions) {
    std::set<std::string> acts;
    for (const auto& p : s.products) acts.insert(data.truth.activity_a.at(p));
    CHECK(acts.size() == 1);
  }
}

TEST_CASE("generated shop A events recover the configured exponent") {
  const auto cfg = small_config();
  const auto data = generate_shops(cfg);
  const auto obs = rank_observations(data.events_a, data.truth.rank_a);
  REQUIRE(obs.size() >= 10000);
  const auto fit = fit_power_law_exponent(obs, cfg.products_a / cfg.num_activities);
  CHECK(std::abs(fit.alpha - cfg.alpha_a) < 0.15);
}

TEST_CASE("generated corpora pass the KS calibration check") {
  const auto cfg = small_config();
  const auto data = generate_shops(cfg);
  const auto obs = rank_observations(data.events_b, data.truth.rank_b);
  CHECK(ks_distance(obs, cfg.alpha_b, cfg.cutoff, cfg.products_b / cfg.num_activities) < 0.05);
}

TEST_CASE("default session length distribution matches the published percentiles") {
  const auto cfg = small_config();
  const auto data = generate_shops(cfg);
  const auto grouped = corpus::sessionize(data.events_a);
  const auto cs = corpus::stats(grouped.sessions);
  CHECK(cs.length_percentiles[0] == 3);
  CHECK(cs.length_percentiles[1] == 5);
  CHECK(cs.length_percentiles[2] == 7);
}

TEST_CASE("corresponding products always share an activity label") {
  const auto data = generate_shops(small_config());
  REQUIRE(!data.truth.correspondence.empty());
  std::set<std::string> targets;
  for (const auto& [a, b] : data.truth.correspondence) {
    CHECK(data.truth.activity_a.at(a) == data.truth.activity_b.at(b));
    CHECK(targets.insert(b).second);  // injective where defined
  }
}

TEST_CASE("cross-session drift controls activity agreement") {
  auto cfg = small_config();
  const auto data = generate_shops(cfg);
  const auto agreement = [&](double drift, std::uint64_t seed) {
    auto c = cfg;
    c.intent_drift_prob = drift;
    c.rng_seed = seed;
    const auto pairs = generate_cross_sessions(c, data, 3000);
    int agree = 0;
    for (const auto& p : pairs) {
      const auto& act_src = data.truth.activity_a.at(p.source.products.front());
      const auto& act_tgt = data.truth.activity_b.at(p.target.products.front());
      if (act_src == act_tgt) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(pairs.size());
  };
  CHECK(agreement(0.0, 21) == doctest::Approx(1.0));
  CHECK(std::abs(agreement(1.0, 22) - 0.1) < 0.04);  // 1/N with N=10
}

TEST_CASE("the published cross-session count is generatable") {
  auto cfg = small_config();
  cfg.sessions_a = 10;
  cfg.sessions_b = 10;
  const auto data = generate_shops(cfg);
  const auto pairs = generate_cross_sessions(cfg, data, 12510);
  CHECK(pairs.size() == 12510);
  for (const auto& p : pairs) {
    CHECK(!p.source.products.empty());
    CHECK(!p.target.products.empty());
  }
}

TEST_CASE("query corpora are activity-keyed and deterministic") {
  auto cfg = small_config();
  cfg.sessions_a = 10;
  cfg.sessions_b = 10;
  const auto data = generate_shops(cfg);
  const auto cross = generate_cross_sessions(cfg, data, 200);
  const auto q1 = generate_queries(cfg, data, cross, 300);
  const auto q2 = generate_queries(cfg, data, cross, 300);
  REQUIRE(q1.train.size() == 300);
  REQUIRE(q1.cross_truth.size() == 200);
  for (std::size_t i = 0; i < q1.train.size(); ++i) {
    CHECK(q1.train[i].query == q2.train[i].query);
  }
  // Ground-truth queries belong to the target session's activity family.
  for (const auto& item : q1.cross_truth) {
    CHECK(!item.query.empty());
    CHECK(item.session.products.size() >= 1);
  }
  // Two activities share the first letter 'b' so one-character prefixes can
  // disambiguate intents.
  const auto names = activity_names(10);
  int b_count = 0;
  for (const auto& n : names) {
    if (n.front() == 'b') ++b_count;
  }
  CHECK(b_count >= 2);
}
