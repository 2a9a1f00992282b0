#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "shopalign/tm.hpp"

using namespace shopalign;
using namespace shopalign::align;

namespace {

struct TmFixture {
  embed::EmbeddingTable source;
  embed::EmbeddingTable target;
  std::vector<corpus::CrossSession> cross;
};

TmFixture tiny_fixture(int n_src, int n_tgt, int d, Rng& rng) {
  TmFixture f;
  f.source = oracle::table_from_rows(oracle::random_rows(n_src, d, rng, 0.5), "s");
  f.target = oracle::table_from_rows(oracle::random_rows(n_tgt, d, rng, 0.5), "t");
  return f;
}

corpus::CrossSession make_pair(std::vector<std::string> src, std::vector<std::string> tgt) {
  corpus::CrossSession cs;
  cs.source = oracle::make_session("x", std::move(src), "A");
  cs.target = oracle::make_session("x", std::move(tgt), "B");
  return cs;
}

}  // namespace

TEST_CASE("recurrent and softmax gradients match finite differences") {
  Rng rng(41);
  auto f = tiny_fixture(4, 4, 3, rng);
  TmConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 0;
  cfg.rng_seed = 5;
  f.cross.push_back(make_pair({"s0", "s2"}, {"t1", "t3"}));
  TranslationModel model = tm_train(f.cross, f.source, f.target, cfg);

  const std::vector<int> src{0, 2, 1};
  const std::vector<int> tgt{1, 3, 0};
  TmGradients grads(model);
  tm_pair_backward(model, src, tgt, grads);
  const auto loss = [&] { return tm_pair_loss(model, src, tgt); };

  double worst = 0.0;
  const auto check_mat = [&](Mat& param, const Mat& grad) {
    for (int i = 0; i < param.rows(); ++i) {
      for (int j = 0; j < param.cols(); ++j) {
        const double numeric = oracle::central_difference(loss, param(i, j));
        if (std::abs(grad(i, j)) > 1e-10 || std::abs(numeric) > 1e-10) {
          worst = std::max(worst, oracle::rel_error(grad(i, j), numeric, 1e-6));
        }
      }
    }
  };
  const auto check_vec = [&](Vec& param, const Vec& grad) {
    for (int i = 0; i < param.size(); ++i) {
      const double numeric = oracle::central_difference(loss, param(i));
      if (std::abs(grad(i)) > 1e-10 || std::abs(numeric) > 1e-10) {
        worst = std::max(worst, oracle::rel_error(grad(i), numeric, 1e-6));
      }
    }
  };

  check_mat(model.encoder.wz, grads.encoder.wz);
  check_mat(model.encoder.uz, grads.encoder.uz);
  check_mat(model.encoder.wr, grads.encoder.wr);
  check_mat(model.encoder.ur, grads.encoder.ur);
  check_mat(model.encoder.wh, grads.encoder.wh);
  check_mat(model.encoder.uh, grads.encoder.uh);
  check_vec(model.encoder.bz, grads.encoder.bz);
  check_vec(model.encoder.br, grads.encoder.br);
  check_vec(model.encoder.bh, grads.encoder.bh);
  check_mat(model.decoder.wz, grads.decoder.wz);
  check_mat(model.decoder.uz, grads.decoder.uz);
  check_mat(model.decoder.wr, grads.decoder.wr);
  check_mat(model.decoder.ur, grads.decoder.ur);
  check_mat(model.decoder.wh, grads.decoder.wh);
  check_mat(model.decoder.uh, grads.decoder.uh);
  check_vec(model.decoder.bz, grads.decoder.bz);
  check_vec(model.decoder.br, grads.decoder.br);
  check_vec(model.decoder.bh, grads.decoder.bh);
  check_mat(model.w_out, grads.w_out);
  check_vec(model.b_out, grads.b_out);
  check_mat(model.src_embed, grads.src_embed);
  check_mat(model.tgt_embed, grads.tgt_embed);
  CHECK(worst < 1e-3);
}

TEST_CASE("an untrained model is near the uniform cross-entropy bound") {
  Rng rng(42);
  auto f = tiny_fixture(6, 9, 4, rng);
  f.cross.push_back(make_pair({"s0"}, {"t0"}));
  TmConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 0;
  TranslationModel model = tm_train(f.cross, f.source, f.target, cfg);
  const double ce = tm_pair_loss(model, {0, 1}, {2, 5, 8});
  const double bound = std::log(9.0);
  CHECK(std::abs(ce - bound) / bound < 0.05);
}

TEST_CASE("an overfit model reproduces its single training pair") {
  Rng rng(43);
  auto f = tiny_fixture(5, 5, 4, rng);
  f.cross.push_back(make_pair({"s0", "s1", "s2"}, {"t3", "t1", "t4"}));
  TmConfig cfg;
  cfg.hidden = 16;
  cfg.epochs = 200;
  cfg.learning_rate = 0.15;
  cfg.rng_seed = 7;
  TmTrainStats stats;
  TranslationModel model = tm_train(f.cross, f.source, f.target, cfg, &stats);
  CHECK(stats.epoch_mean_loss.back() < stats.epoch_mean_loss.front());

  const auto decoded = tm_greedy_decode(model, {0, 1, 2}, 3);
  CHECK(decoded == std::vector<int>{3, 1, 4});

  SUBCASE("the first target is ranked first for FIP") {
    const auto pred = tm_predict_ids(model, {0, 1, 2}, 5);
    REQUIRE(!pred.fip.empty());
    CHECK(pred.fip[0].id == 3);
  }
}

TEST_CASE("tm_predict clamps top_k and matches the softmax enumeration oracle") {
  Rng rng(44);
  auto f = tiny_fixture(4, 7, 3, rng);
  f.cross.push_back(make_pair({"s0"}, {"t1", "t2"}));
  TmConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 3;
  TranslationModel model = tm_train(f.cross, f.source, f.target, cfg);

  const auto full = tm_predict_ids(model, {0, 2}, 100);
  CHECK(full.fip.size() == 7);
  CHECK(full.aip.size() == 7);

  // Oracle: FIP scores must be sorted and must be exactly the first-step
  // softmax (probabilities sum to 1 over the enumeration).
  double total = 0.0;
  for (std::size_t i = 0; i < full.fip.size(); ++i) {
    total += full.fip[i].similarity;
    if (i > 0) CHECK(full.fip[i - 1].similarity >= full.fip[i].similarity);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  const auto top3 = tm_predict_ids(model, {0, 2}, 3);
  REQUIRE(top3.fip.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(top3.fip[static_cast<std::size_t>(i)].id ==
                                    full.fip[static_cast<std::size_t>(i)].id);
}

TEST_CASE("tm training is deterministic per seed") {
  Rng rng(45);
  auto f = tiny_fixture(5, 6, 3, rng);
  f.cross.push_back(make_pair({"s0", "s1"}, {"t2"}));
  f.cross.push_back(make_pair({"s3"}, {"t4", "t5"}));
  TmConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 4;
  cfg.rng_seed = 11;
  const auto m1 = tm_train(f.cross, f.source, f.target, cfg);
  const auto m2 = tm_train(f.cross, f.source, f.target, cfg);
  CHECK(m1.w_out == m2.w_out);
  CHECK(m1.encoder.wz == m2.encoder.wz);
  CHECK(m1.tgt_embed == m2.tgt_embed);
}

TEST_CASE("empty sources are rejected at prediction time") {
  Rng rng(46);
  auto f = tiny_fixture(4, 4, 3, rng);
  f.cross.push_back(make_pair({"s0"}, {"t0"}));
  TmConfig cfg;
  cfg.hidden = 8;
  cfg.epochs = 0;
  const auto model = tm_train(f.cross, f.source, f.target, cfg);
  CHECK_THROWS_AS(tm_predict_ids(model, {}, 3), ValidationError);
  corpus::Session oov = oracle::make_session("x", {"unknown"}, "A");
  CHECK_THROWS_AS(tm_predict(model, oov, 3), ValidationError);
}
