#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "shopalign/corpus.hpp"
#include "shopalign/embed.hpp"
#include "shopalign/linalg.hpp"

// Test-side oracles, independent of the library implementations they check.
namespace oracle {

using shopalign::Mat;
using shopalign::Rng;
using shopalign::Vec;

// ---- ranking metrics, straight from the defining formulas ----------------

inline double brute_ndcg(const std::vector<int>& ranking, const std::set<int>& rel, int k) {
  double dcg = 0.0;
  for (int i = 1; i <= static_cast<int>(ranking.size()) && i <= k; ++i) {
    const int candidate = ranking[static_cast<std::size_t>(i - 1)];
    const double rating = rel.count(candidate) ? 1.0 : 0.0;
    dcg += rating / std::log2(i + 1.0);
  }
  double idcg = 0.0;
  const int ideal = std::min<int>(k, static_cast<int>(rel.size()));
  for (int i = 1; i <= ideal; ++i) idcg += 1.0 / std::log2(i + 1.0);
  return dcg / idcg;
}

inline int brute_hit(const std::vector<int>& ranking, const std::set<int>& rel, int k) {
  for (int i = 0; i < static_cast<int>(ranking.size()) && i < k; ++i) {
    if (rel.count(ranking[static_cast<std::size_t>(i)])) return 1;
  }
  return 0;
}

inline double brute_mrr(const std::vector<std::vector<int>>& rankings,
                        const std::vector<std::set<int>>& rels, int k) {
  double total = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    for (int i = 0; i < static_cast<int>(rankings[q].size()) && i < k; ++i) {
      if (rels[q].count(rankings[q][static_cast<std::size_t>(i)])) {
        total += 1.0 / (i + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(rankings.size());
}

// ---- numerics -------------------------------------------------------------

/// Central finite difference of `loss` with respect to one scalar slot.
inline double central_difference(const std::function<double()>& loss, double& slot,
                                 double eps = 1e-5) {
  const double saved = slot;
  slot = saved + eps;
  const double up = loss();
  slot = saved - eps;
  const double down = loss();
  slot = saved;
  return (up - down) / (2.0 * eps);
}

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Random orthogonal matrix from the QR decomposition of a gaussian matrix.
inline Mat random_orthogonal(int d, Rng& rng) {
  Mat g(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) g(i, j) = rng.gaussian();
  }
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fix the sign convention so Q is unique given g.
  for (int i = 0; i < d; ++i) {
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  }
  return q;
}

// ---- fixtures -------------------------------------------------------------

inline shopalign::corpus::Vocabulary toy_vocab(int n, const std::string& prefix = "p") {
  std::vector<std::string> products;
  std::vector<std::int64_t> counts;
  for (int i = 0; i < n; ++i) {
    products.push_back(prefix + std::to_string(i));
    counts.push_back(1);
  }
  return {products, counts};
}

inline shopalign::embed::EmbeddingTable table_from_rows(const Mat& rows,
                                                        const std::string& prefix = "p") {
  shopalign::embed::EmbeddingTable t;
  t.vocab = toy_vocab(static_cast<int>(rows.rows()), prefix);
  t.u = rows;
  t.v = shopalign::MatRM::Zero(rows.rows(), rows.cols());
  return t;
}

inline Mat random_rows(int n, int d, Rng& rng, double scale = 1.0) {
  Mat m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = scale * rng.gaussian();
  }
  return m;
}

inline shopalign::corpus::Session make_session(const std::string& id,
                                               std::vector<std::string> products,
                                               const std::string& shop = "A") {
  shopalign::corpus::Session s;
  s.session_id = id;
  s.shop_id = shop;
  s.products = std::move(products);
  return s;
}

}  // namespace oracle
