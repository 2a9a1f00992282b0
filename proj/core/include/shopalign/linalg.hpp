#pragma once

#include <Eigen/Dense>
#include <vector>

#include "shopalign/common.hpp"

namespace shopalign {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
// Row-major storage for tables that are updated and read row-by-row.
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double cosine(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

/// Draws indices with probability proportional to the given weights.
/// Backed by a cumulative table and binary search.
class WeightedSampler {
 public:
  explicit WeightedSampler(const std::vector<double>& weights);

  int sample(Rng& rng) const;
  int size() const { return static_cast<int>(cumulative_.size()); }
  const std::vector<double>& probabilities() const { return probs_; }

 private:
  std::vector<double> cumulative_;
  std::vector<double> probs_;
};

/// Principal component analysis fit on rows of X.
struct Pca {
  Vec mean;        // column means of the fitted data
  Mat components;  // dims x features, rows are principal axes (descending variance)
  Vec variances;   // explained variance per component

  /// Projects rows of X onto the fitted components.
  Mat transform(const Mat& x) const;
};

Pca fit_pca(const Mat& x, int dims);

struct KMeansResult {
  Mat centroids;                 // k x features
  std::vector<int> assignment;   // per row of the input
  int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded
/// from the point farthest from its assigned centroid.
KMeansResult kmeans(const Mat& x, int k, Rng& rng, int max_iters = 100);

}  // namespace shopalign
