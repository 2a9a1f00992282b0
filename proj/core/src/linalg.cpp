#include "shopalign/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shopalign {

WeightedSampler::WeightedSampler(const std::vector<double>& weights) {
  if (weights.empty()) throw ValidationError("WeightedSampler: no weights");
  cumulative_.reserve(weights.size());
  probs_.reserve(weights.size());
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw ValidationError("WeightedSampler: weights must be positive and finite");
    }
    total += w;
    cumulative_.push_back(total);
  }
  for (double w : weights) probs_.push_back(w / total);
}

int WeightedSampler::sample(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<int>(it - cumulative_.begin());
}

Mat Pca::transform(const Mat& x) const {
  return (x.rowwise() - mean.transpose()) * components.transpose();
}

Pca fit_pca(const Mat& x, int dims) {
  if (x.rows() < 2) throw ValidationError("fit_pca: need at least two rows");
  if (dims < 1 || dims > x.cols()) {
    throw ValidationError("fit_pca: requested dimension exceeds feature count");
  }
  Pca pca;
  pca.mean = x.colwise().mean();
  Mat centered = x.rowwise() - pca.mean.transpose();
  Mat cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Mat> solver(cov);
  // Eigen returns ascending eigenvalues; take the trailing `dims` reversed.
  const auto n = cov.rows();
  pca.components = Mat(dims, n);
  pca.variances = Vec(dims);
  for (int i = 0; i < dims; ++i) {
    pca.components.row(i) = solver.eigenvectors().col(n - 1 - i).transpose();
    pca.variances(i) = std::max(0.0, solver.eigenvalues()(n - 1 - i));
  }
  return pca;
}

namespace {

double sq_dist(const Mat& x, int row, const Mat& centroids, int c) {
  return (x.row(row) - centroids.row(c)).squaredNorm();
}

}  // namespace

KMeansResult kmeans(const Mat& x, int k, Rng& rng, int max_iters) {
  const int n = static_cast<int>(x.rows());
  if (k < 1 || k > n) throw ValidationError("kmeans: k must be in [1, rows]");

  KMeansResult res;
  res.centroids = Mat(k, x.cols());
  res.assignment.assign(n, 0);

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::max());
  int first = static_cast<int>(rng.index(n));
  res.centroids.row(0) = x.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x, i, res.centroids, c - 1));
      total += d2[i];
    }
    int pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total, acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= u) { pick = i; break; }
      }
    } else {
      pick = static_cast<int>(rng.index(n));
    }
    res.centroids.row(c) = x.row(pick);
  }

  std::vector<int> counts(k, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(x, i, res.centroids, 0);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(x, i, res.centroids, c);
        if (d < best_d) { best_d = d; best = c; }
      }
      if (best != res.assignment[i]) { res.assignment[i] = best; changed = true; }
    }
    res.iterations = iter + 1;

    Mat sums = Mat::Zero(k, x.cols());
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(res.assignment[i]) += x.row(i);
      ++counts[res.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centroids.row(c) = sums.row(c) / counts[c];
      } else {
        // Re-seed an empty cluster with the point farthest from its centroid.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = sq_dist(x, i, res.centroids, res.assignment[i]);
          if (d > far_d) { far_d = d; far = i; }
        }
        res.centroids.row(c) = x.row(far);
        res.assignment[far] = c;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
  }
  return res;
}

}  // namespace shopalign
