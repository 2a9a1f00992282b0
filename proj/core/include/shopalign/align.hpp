#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shopalign/catalog.hpp"
#include "shopalign/corpus.hpp"
#include "shopalign/embed.hpp"
#include "shopalign/linalg.hpp"

namespace shopalign::align {

enum class Method { IM, NM, UM, AM };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

/// A learned linear transform from source space to target space.
/// Self-learning methods (IM, NM) produce orthogonal W.
struct AlignmentMap {
  Mat w;                      // d_target x d_source, applied as w * v
  std::optional<Vec> bias;    // d_target
  Method method = Method::IM;
};

/// W * v + bias.
Vec translate_point(const AlignmentMap& map, const Vec& v);

/// Weighted candidate product pairs bootstrapping self-learning.
struct SeedDictionary {
  struct Pair {
    std::string source;
    std::string target;
    double weight = 1.0;
  };
  std::vector<Pair> pairs;
};

/// Builds the feature-based seed: PCA (fit on the union of both catalogs)
/// down to `dims`, k-means with `clusters` on shop A, the 2 points nearest
/// each centroid become sample points, each paired with its nearest shop B
/// feature vector by cosine. At most 2*clusters pairs.
SeedDictionary build_feature_seed(const Catalog& features_a, const Catalog& features_b,
                                  int dims, int clusters, std::uint64_t rng_seed);

/// Closed-form weighted orthogonal Procrustes via SVD of the weighted
/// cross-covariance of the paired center vectors.
AlignmentMap procrustes_fit(const SeedDictionary& seed, const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target);

/// Mutual-nearest-neighbor pairs (by cosine) between the mapped source
/// table and the target table. Never empty for nonempty tables.
std::vector<std::pair<int, int>> induce_dictionary(const AlignmentMap& map,
                                                   const embed::EmbeddingTable& source,
                                                   const embed::EmbeddingTable& target);

struct SelfLearningOptions {
  int max_iters = 50;
};

struct SelfLearningResult {
  AlignmentMap map;
  std::vector<int> dictionary_sizes;           // per iteration
  std::vector<std::pair<int, int>> dictionary; // final induced pairs (indices)
  bool converged = false;
};

/// Alternates procrustes_fit and dictionary induction until the induced
/// dictionary is unchanged or max_iters is reached. max_iters == 0 returns
/// the plain fit of the seed.
SelfLearningResult self_learning_align(const SeedDictionary& seed,
                                       const embed::EmbeddingTable& source,
                                       const embed::EmbeddingTable& target,
                                       const SelfLearningOptions& opts = {});

struct NmOptions {
  // Sorted in-shop similarity vectors are resampled to this length.
  int signature_length = 32;
  SelfLearningOptions self_learning;
};

/// Fully unsupervised alignment: similarity-structure signatures form the
/// weak seed, then self-learning refines it.
SelfLearningResult nm_align(const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target, const NmOptions& opts = {});

/// Fixed-length similarity signature of every product against its own shop.
Mat similarity_signatures(const embed::EmbeddingTable& table, int signature_length);

struct RegressionOptions {
  double ridge_lambda = 1e-3;
};

/// Supervised pair regression (UM): least squares with bias from the last
/// source product to the first target product of each cross-shop session.
AlignmentMap pair_regression_align(const std::vector<corpus::CrossSession>& cross_sessions,
                                   const embed::EmbeddingTable& source,
                                   const embed::EmbeddingTable& target,
                                   const RegressionOptions& opts = {});

/// Semi-supervised activity-centroid regression (AM): per shared activity,
/// sample n_per_category products per shop, fit on the centroid pairs.
AlignmentMap centroid_align(const Catalog& catalog_a, const Catalog& catalog_b,
                            int n_per_category, const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target, std::uint64_t rng_seed,
                            const RegressionOptions& opts = {});

}  // namespace shopalign::align
