#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "shopalign/eval.hpp"
#include "shopalign/probe.hpp"

using namespace shopalign;
using namespace shopalign::eval;

TEST_CASE("ndcg_at_k hand-checked cases") {
  SUBCASE("single relevant item at rank 1") {
    CHECK(ndcg_at_k({{7, 1, 2}, {7}}, 10) == doctest::Approx(1.0));
  }
  SUBCASE("relevant item at rank 2") {
    CHECK(ndcg_at_k({{0, 1, 2}, {1}}, 10) ==
          doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-4));
  }
  SUBCASE("no relevant item in the top k") {
    CHECK(ndcg_at_k({{0, 1, 2}, {9}}, 10) == 0.0);
  }
  SUBCASE("empty REL is invalid") {
    CHECK_THROWS_AS(ndcg_at_k({{0, 1}, {}}, 10), ValidationError);
  }
}

TEST_CASE("hit_at_k boundary behavior") {
  std::vector<int> ranking{0, 1, 2, 3, 4};
  CHECK(hit_at_k({ranking, {4}}, 5) == 1);  // rank k
  CHECK(hit_at_k({ranking, {4}}, 4) == 0);  // rank k+1
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::set<int> rel{static_cast<int>(rng.index(8))};
    std::vector<int> r;
    for (int i = 0; i < 6; ++i) r.push_back(static_cast<int>(rng.index(8)) + (i * 8));
    const int k = 1 + static_cast<int>(rng.index(6));
    RankedPrediction p{r, {rel.begin(), rel.end()}};
    CHECK(hit_at_k(p, k) == oracle::brute_hit(r, rel, k));
  }
}

TEST_CASE("mrr_at_k hand-checked cases") {
  SUBCASE("all first-relevant at rank 1") {
    std::vector<RankedPrediction> preds{{{5, 1}, {5}}, {{2, 9}, {2}}};
    CHECK(mrr_at_k(preds, 5) == doctest::Approx(1.0));
  }
  SUBCASE("ranks 2 and 4 give 0.375") {
    std::vector<RankedPrediction> preds{{{0, 5, 1, 2}, {5}}, {{0, 1, 2, 7}, {7}}};
    CHECK(mrr_at_k(preds, 5) == doctest::Approx(0.375));
  }
  SUBCASE("empty list is invalid") {
    CHECK_THROWS_AS(mrr_at_k({}, 5), ValidationError);
  }
}

TEST_CASE("metrics agree with the brute-force oracle on random instances") {
  Rng rng(9);
  std::vector<std::vector<int>> rankings;
  std::vector<std::set<int>> rels;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(10));
    std::vector<int> ranking;
    for (int i = 0; i < n; ++i) ranking.push_back(i * 3 + static_cast<int>(rng.index(3)));
    std::set<int> rel;
    const int nrel = 1 + static_cast<int>(rng.index(4));
    for (int i = 0; i < nrel; ++i) rel.insert(static_cast<int>(rng.index(30)));
    const int k = 1 + static_cast<int>(rng.index(12));

    RankedPrediction p{ranking, {rel.begin(), rel.end()}};
    CHECK(ndcg_at_k(p, k) == doctest::Approx(oracle::brute_ndcg(ranking, rel, k)).epsilon(1e-12));
    CHECK(hit_at_k(p, k) == oracle::brute_hit(ranking, rel, k));
    rankings.push_back(ranking);
    rels.push_back(rel);
  }
  std::vector<RankedPrediction> preds;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    preds.push_back({rankings[i], {rels[i].begin(), rels[i].end()}});
  }
  CHECK(mrr_at_k(preds, 5) == doctest::Approx(oracle::brute_mrr(rankings, rels, 5)).epsilon(1e-12));
}

TEST_CASE("metrics are invariant under product relabeling") {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ranking{0, 1, 2, 3, 4, 5};
    std::shuffle(ranking.begin(), ranking.end(), rng.engine());
    std::unordered_set<int> rel{ranking[2], ranking[4]};
    RankedPrediction orig{ranking, rel};

    // Relabel id -> id + 100.
    std::vector<int> shifted;
    for (int id : ranking) shifted.push_back(id + 100);
    std::unordered_set<int> rel_shifted;
    for (int id : rel) rel_shifted.insert(id + 100);
    RankedPrediction relabeled{shifted, rel_shifted};

    const int k = 1 + static_cast<int>(rng.index(7));
    CHECK(ndcg_at_k(orig, k) == ndcg_at_k(relabeled, k));
    CHECK(hit_at_k(orig, k) == hit_at_k(relabeled, k));
  }
}

namespace {

// Toy geometry: two tight clusters; b is a's nearest neighbor.
embed::EmbeddingTable toy_geometry() {
  Mat rows(4, 2);
  rows << 1.0, 0.05,   // a
          1.0, 0.0,    // b
          -1.0, 0.1,   // c
          -1.0, -0.1;  // d
  embed::EmbeddingTable t;
  t.vocab = corpus::Vocabulary({"a", "b", "c", "d"}, {4, 3, 2, 1});
  t.u = rows;
  t.v = MatRM::Zero(4, 2);
  return t;
}

}  // namespace

TEST_CASE("nep_within_shop hits nearby targets in a toy geometry") {
  const auto table = toy_geometry();
  std::vector<corpus::Session> sessions{oracle::make_session("s1", {"a", "a", "b"})};
  const auto report = nep_within_shop(sessions, table, {.k = 2});
  REQUIRE(report.evaluated == 1);
  CHECK(report.records[0].hit_rank >= 1);
  CHECK(report.records[0].hit_rank <= 2);
  CHECK(report.hit_rate == 1.0);
}

TEST_CASE("nep_within_shop skips and counts unusable sessions") {
  const auto table = toy_geometry();
  std::vector<corpus::Session> sessions{
      oracle::make_session("s1", {"a"}),              // too short, ignored
      oracle::make_session("s2", {"zz", "a"}),        // empty prefix intent
      oracle::make_session("s3", {"a", "b"}),
  };
  const auto report = nep_within_shop(sessions, table, {.k = 2});
  CHECK(report.evaluated == 1);
  CHECK(report.skipped == 1);
}

TEST_CASE("grid expansion matches the published table and subsampling works") {
  GridSpec spec;
  const auto grid = expand_grid(spec);
  CHECK(grid.size() == 750);  // 6 x 5 x 5 x 5
  const auto sampled = subsample_grid(grid, 10, 3);
  CHECK(sampled.size() == 10);
  const auto all = subsample_grid(grid, 1000, 3);
  CHECK(all.size() == 750);
}

namespace {

std::vector<corpus::Session> clustered_corpus(int n, Rng& rng) {
  // Sessions alternate between two product families.
  std::vector<corpus::Session> sessions;
  for (int i = 0; i < n; ++i) {
    const std::string fam = i % 2 == 0 ? "a" : "b";
    std::vector<std::string> products;
    for (int e = 0; e < 4; ++e) {
      products.push_back(fam + std::to_string(rng.index(4)));
    }
    sessions.push_back(oracle::make_session("sess-" + std::to_string(i), products));
  }
  return sessions;
}

}  // namespace

TEST_CASE("grid_search ranks a trained config above an untrained one") {
  Rng rng(12);
  const auto sessions = clustered_corpus(120, rng);
  GridSpec spec;
  spec.base.dimension = 8;
  spec.base.min_count = 1;
  spec.base.rng_seed = 4;

  embed::TrainConfig trained = spec.base;
  trained.epochs = 12;
  embed::TrainConfig untrained = spec.base;
  untrained.epochs = 0;

  SUBCASE("single-config grid gives a single row") {
    const auto entries = grid_search(sessions, {trained});
    CHECK(entries.size() == 1);
  }
  SUBCASE("two-config ordering") {
    const auto entries = grid_search(sessions, {untrained, trained});
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].config.epochs == 12);
    CHECK(entries[0].ndcg >= entries[1].ndcg);
  }
  SUBCASE("empty grid is invalid") {
    CHECK_THROWS_AS(grid_search(sessions, {}), ValidationError);
  }
}

TEST_CASE("popularity_baseline ranks by count with index tie-break") {
  corpus::Vocabulary vocab({"x", "y", "z"}, {0, 0, 0});
  SUBCASE("counts {x:3, y:1}") {
    std::vector<corpus::Session> sessions{oracle::make_session("s", {"x", "x", "x", "y"})};
    const auto ranking = popularity_baseline(sessions, vocab);
    CHECK(ranking == std::vector<int>{0, 1, 2});
  }
  SUBCASE("all counts equal falls back to index order") {
    std::vector<corpus::Session> sessions{oracle::make_session("s", {"z", "y", "x"})};
    const auto ranking = popularity_baseline(sessions, vocab);
    CHECK(ranking == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("cross_shop_eval with an identity map reduces to NEP") {
  const auto table = toy_geometry();
  std::vector<corpus::Session> sessions{oracle::make_session("n1", {"a", "a", "b"}),
                                        oracle::make_session("n2", {"c", "d", "c"}),
                                        oracle::make_session("n3", {"b", "a"})};
  const auto nep = nep_within_shop(sessions, table, {.k = 3});

  align::AlignmentMap identity;
  identity.w = Mat::Identity(2, 2);
  std::vector<corpus::CrossSession> cross;
  for (const auto& s : sessions) {
    corpus::CrossSession cs;
    cs.source = s;
    cs.source.products.pop_back();
    cs.target = oracle::make_session(s.session_id, {s.products.back()}, "A");
    cross.push_back(std::move(cs));
  }
  const auto reports =
      cross_shop_eval(cross, make_map_ranker(identity, table, table, 3), table, 3);
  CHECK(reports.fip.ndcg == doctest::Approx(nep.ndcg).epsilon(1e-12));
  CHECK(reports.fip.hit_rate == doctest::Approx(nep.hit_rate).epsilon(1e-12));
  CHECK(reports.aip.ndcg == doctest::Approx(nep.ndcg).epsilon(1e-12));
}

TEST_CASE("AIP is at least FIP on shared predictions") {
  const auto table = toy_geometry();
  align::AlignmentMap identity;
  identity.w = Mat::Identity(2, 2);
  std::vector<corpus::CrossSession> cross;
  Rng rng(5);
  const std::vector<std::string> ids{"a", "b", "c", "d"};
  for (int i = 0; i < 30; ++i) {
    corpus::CrossSession cs;
    cs.source = oracle::make_session("x" + std::to_string(i),
                                     {ids[rng.index(4)], ids[rng.index(4)]}, "A");
    cs.target = oracle::make_session(
        "x" + std::to_string(i), {ids[rng.index(4)], ids[rng.index(4)], ids[rng.index(4)]}, "B");
    cross.push_back(std::move(cs));
  }
  const auto reports =
      cross_shop_eval(cross, make_map_ranker(identity, table, table, 2), table, 2);
  CHECK(reports.aip.ndcg >= reports.fip.ndcg);
  CHECK(reports.aip.hit_rate >= reports.fip.hit_rate);
}

TEST_CASE("cross_shop_eval NDCG equals the hand oracle on a 3-product instance") {
  Mat rows(3, 2);
  rows << 1, 0, 0, 1, -1, 0;
  embed::EmbeddingTable table;
  table.vocab = corpus::Vocabulary({"t0", "t1", "t2"}, {3, 2, 1});
  table.u = rows;
  table.v = MatRM::Zero(3, 2);

  // Static ranking [t0, t1, t2]; target session [t1, t2].
  std::vector<corpus::CrossSession> cross;
  corpus::CrossSession cs;
  cs.source = oracle::make_session("x0", {"t0"}, "A");
  cs.target = oracle::make_session("x0", {"t1", "t2"}, "B");
  cross.push_back(cs);
  const auto reports = cross_shop_eval(cross, make_static_ranker({0, 1, 2}), table, 10);

  // FIP: REL={t1} found at rank 2 -> 1/log2(3).
  CHECK(reports.fip.ndcg == doctest::Approx(oracle::brute_ndcg({0, 1, 2}, {1}, 10)).epsilon(1e-12));
  // AIP: REL={t1,t2} at ranks 2,3 -> (1/log2 3 + 1/2) / (1 + 1/log2 3).
  CHECK(reports.aip.ndcg ==
        doctest::Approx(oracle::brute_ndcg({0, 1, 2}, {1, 2}, 10)).epsilon(1e-12));
}

TEST_CASE("cross_shop_eval counts empty intents as skipped") {
  const auto table = toy_geometry();
  align::AlignmentMap identity;
  identity.w = Mat::Identity(2, 2);
  std::vector<corpus::CrossSession> cross;
  corpus::CrossSession cs;
  cs.source = oracle::make_session("x0", {"unknown-product"}, "A");
  cs.target = oracle::make_session("x0", {"a"}, "B");
  cross.push_back(cs);
  const auto reports =
      cross_shop_eval(cross, make_map_ranker(identity, table, table, 2), table, 2);
  CHECK(reports.fip.evaluated == 0);
  CHECK(reports.fip.skipped == 1);
}

TEST_CASE("probe reaches perfect accuracy on separable clusters") {
  Rng rng(14);
  const int per = 60, d = 6;
  Mat rows(2 * per, d);
  std::vector<std::string> labels;
  for (int i = 0; i < 2 * per; ++i) {
    const double sign = i < per ? 2.5 : -2.5;
    for (int j = 0; j < d; ++j) rows(i, j) = sign + 0.3 * rng.gaussian();
    labels.push_back(i < per ? "tennis" : "soccer");
  }
  embed::EmbeddingTable table = oracle::table_from_rows(rows);
  ProbeConfig cfg;
  cfg.epochs = 40;
  cfg.rng_seed = 8;
  CHECK(probe_train_eval(table, labels, 0.25, cfg) == doctest::Approx(1.0));
}

TEST_CASE("probe on shuffled labels is near chance") {
  Rng rng(15);
  const int n = 400, d = 6, classes = 4;
  const Mat rows = oracle::random_rows(n, d, rng);
  std::vector<std::string> labels;
  for (int i = 0; i < n; ++i) {
    labels.push_back("class" + std::to_string(rng.index(classes)));
  }
  embed::EmbeddingTable table = oracle::table_from_rows(rows);
  ProbeConfig cfg;
  cfg.epochs = 15;
  cfg.rng_seed = 9;
  const double acc = probe_train_eval(table, labels, 0.5, cfg);
  CHECK(std::abs(acc - 1.0 / classes) < 0.1);
}

TEST_CASE("probe rejects classes with fewer than 2 examples") {
  Mat rows = Mat::Zero(3, 2);
  std::vector<int> y{0, 0, 1};
  CHECK_THROWS_AS(train_probe(rows, y, 2, {}), ValidationError);
}

TEST_CASE("projection_2d") {
  SUBCASE("centered 2-D data is reproduced up to rotation/reflection") {
    Rng rng(16);
    Mat rows = oracle::random_rows(12, 2, rng);
    rows.rowwise() -= rows.colwise().mean();
    const auto table = oracle::table_from_rows(rows);
    const Mat coords = projection_2d(table);
    // Pairwise distances must be preserved exactly.
    for (int i = 0; i < rows.rows(); ++i) {
      for (int j = i + 1; j < rows.rows(); ++j) {
        const double orig = (rows.row(i) - rows.row(j)).norm();
        const double proj = (coords.row(i) - coords.row(j)).norm();
        CHECK(orig == doctest::Approx(proj).epsilon(1e-9));
      }
    }
  }
  SUBCASE("rank-1 data has a vanishing second coordinate") {
    Mat rows(5, 3);
    for (int i = 0; i < 5; ++i) rows.row(i) = (i - 2.0) * Eigen::RowVector3d(1, 2, -1);
    const auto table = oracle::table_from_rows(rows);
    const Mat coords = projection_2d(table);
    CHECK(coords.col(1).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  SUBCASE("components match the covariance eigendecomposition oracle") {
    Rng rng(17);
    const Mat rows = oracle::random_rows(5, 3, rng);
    const auto table = oracle::table_from_rows(rows);
    const Mat coords = projection_2d(table);

    Mat centered = rows.rowwise() - rows.colwise().mean();
    Mat cov = centered.transpose() * centered / 4.0;
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    const Vec top = es.eigenvectors().col(2);
    const Vec second = es.eigenvectors().col(1);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(std::abs(coords(i, 0)) - std::abs(centered.row(i) * top)) < 1e-9);
      CHECK(std::abs(std::abs(coords(i, 1)) - std::abs(centered.row(i) * second)) < 1e-9);
    }
  }
  SUBCASE("fewer than 3 products is invalid") {
    const auto table = oracle::table_from_rows(Mat::Zero(2, 4));
    CHECK_THROWS_AS(projection_2d(table), ValidationError);
  }
}

TEST_CASE("error_analysis orders misses and splits on the median") {
  // Table where distances are controlled: t0 near t1, far from t3.
  Mat rows(4, 2);
  rows << 1.0, 0.0, 0.995, 0.1, 0.0, 1.0, -1.0, 0.0;
  embed::EmbeddingTable table;
  table.vocab = corpus::Vocabulary({"t0", "t1", "t2", "t3"}, {4, 3, 2, 1});
  table.u = rows;
  table.v = MatRM::Zero(4, 2);
  std::vector<std::string> labels{"run", "run", "swim", "swim"};

  EvalReport report;
  report.task = "FIP";
  report.k = 1;
  // A hit (excluded), a near miss (t0 predicted, t1 true), a far miss.
  report.records.push_back({"hit", 1, 0, 0, 1.0, 1});
  report.records.push_back({"near", 0, 0, 1, 0.0, 0});
  report.records.push_back({"far", 0, 0, 3, 0.0, 0});
  report.evaluated = 3;

  const auto analysis = error_analysis(report, table, &labels);
  REQUIRE(analysis.misses.size() == 2);
  CHECK(analysis.misses[0].session_id == "near");
  CHECK(analysis.misses[1].session_id == "far");
  CHECK(analysis.misses[0].distance < analysis.misses[1].distance);
  CHECK(analysis.below_median_match_rate == 1.0);  // near miss shares "run"
  CHECK(analysis.above_median_match_rate == 0.0);
}

TEST_CASE("grid_search propagates training failures with the config attached") {
  Rng rng(44);
  const auto sessions = clustered_corpus(60, rng);
  embed::TrainConfig impossible;
  impossible.min_count = 1000000;  // no product can reach this
  impossible.dimension = 8;
  CHECK_THROWS_WITH_AS((void)grid_search(sessions, {impossible}),
                       doctest::Contains("min_count=1000000"), TrainingError);
}

TEST_CASE("ndcg is 1 exactly when the top prefix is an ideal placement") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_rel = 1 + static_cast<int>(rng.index(4));
    const int k = n_rel + static_cast<int>(rng.index(6));
    std::unordered_set<int> rel;
    while (static_cast<int>(rel.size()) < n_rel) rel.insert(static_cast<int>(rng.index(40)));

    // Ideal prefix: the relevant items in any order, then irrelevant filler.
    std::vector<int> ranking(rel.begin(), rel.end());
    std::shuffle(ranking.begin(), ranking.end(), rng.engine());
    for (int i = 0; i < 6; ++i) ranking.push_back(100 + i);
    CHECK(ndcg_at_k({ranking, rel}, k) == doctest::Approx(1.0).epsilon(1e-12));

    // Any irrelevant item inside the ideal prefix breaks perfection.
    if (n_rel >= 1) {
      std::vector<int> broken = ranking;
      broken.insert(broken.begin(), 999);
      const double v = ndcg_at_k({broken, rel}, k);
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
    }
  }
}
