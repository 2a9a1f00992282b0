#pragma once

#include <unordered_set>
#include <vector>

#include "shopalign/common.hpp"

namespace shopalign::eval {

/// A ranked candidate list plus the ground-truth set REL. rating(i) is the
/// implied binary relevance of the candidate at rank i.
struct RankedPrediction {
  std::vector<int> ranking;            // distinct candidates, best first
  std::unordered_set<int> relevant;    // REL
};

/// NDCG@k with binary ratings: DCG sums rating(i)/log2(i+1) over the top k,
/// IDCG places min(|REL|, k) relevant items at the top ranks.
double ndcg_at_k(const RankedPrediction& p, int k);

/// 1 when any top-k candidate is relevant, else 0.
int hit_at_k(const RankedPrediction& p, int k);

/// Mean over queries of 1/rank of the first relevant result within the
/// top k (0 contribution when none).
double mrr_at_k(const std::vector<RankedPrediction>& predictions, int k);

}  // namespace shopalign::eval
