#include "shopalign/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace shopalign::eval {

double ndcg_at_k(const RankedPrediction& p, int k) {
  if (p.relevant.empty()) throw ValidationError("ndcg_at_k: REL must be nonempty");
  if (k < 1) throw ValidationError("ndcg_at_k: k must be >= 1");
  double dcg = 0.0;
  const int top = std::min<int>(k, static_cast<int>(p.ranking.size()));
  for (int i = 1; i <= top; ++i) {
    if (p.relevant.count(p.ranking[static_cast<std::size_t>(i - 1)])) {
      dcg += 1.0 / std::log2(static_cast<double>(i) + 1.0);
    }
  }
  double idcg = 0.0;
  const int ideal = std::min<int>(k, static_cast<int>(p.relevant.size()));
  for (int i = 1; i <= ideal; ++i) {
    idcg += 1.0 / std::log2(static_cast<double>(i) + 1.0);
  }
  return dcg / idcg;
}

int hit_at_k(const RankedPrediction& p, int k) {
  if (p.relevant.empty()) throw ValidationError("hit_at_k: REL must be nonempty");
  if (k < 1) throw ValidationError("hit_at_k: k must be >= 1");
  const int top = std::min<int>(k, static_cast<int>(p.ranking.size()));
  for (int i = 0; i < top; ++i) {
    if (p.relevant.count(p.ranking[static_cast<std::size_t>(i)])) return 1;
  }
  return 0;
}

double mrr_at_k(const std::vector<RankedPrediction>& predictions, int k) {
  if (predictions.empty()) throw ValidationError("mrr_at_k: empty prediction list");
  if (k < 1) throw ValidationError("mrr_at_k: k must be >= 1");
  double total = 0.0;
  for (const auto& p : predictions) {
    if (p.relevant.empty()) throw ValidationError("mrr_at_k: REL must be nonempty");
    const int top = std::min<int>(k, static_cast<int>(p.ranking.size()));
    for (int i = 0; i < top; ++i) {
      if (p.relevant.count(p.ranking[static_cast<std::size_t>(i)])) {
        total += 1.0 / static_cast<double>(i + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(predictions.size());
}

}  // namespace shopalign::eval
