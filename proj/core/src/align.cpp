#include "shopalign/align.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace shopalign::align {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::IM: return "IM";
    case Method::NM: return "NM";
    case Method::UM: return "UM";
    case Method::AM: return "AM";
  }
  return "IM";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "IM" || name == "im") return Method::IM;
  if (name == "NM" || name == "nm") return Method::NM;
  if (name == "UM" || name == "um") return Method::UM;
  if (name == "AM" || name == "am") return Method::AM;
  return std::nullopt;
}

Vec translate_point(const AlignmentMap& map, const Vec& v) {
  if (v.size() != map.w.cols()) {
    throw ValidationError("translate_point: dimension mismatch");
  }
  Vec out = map.w * v;
  if (map.bias) out += *map.bias;
  return out;
}

SeedDictionary build_feature_seed(const Catalog& features_a, const Catalog& features_b,
                                  int dims, int clusters, std::uint64_t rng_seed) {
  if (features_a.size() == 0 || features_b.size() == 0) {
    throw ValidationError("build_feature_seed: empty catalog");
  }
  if (features_a.features.cols() != features_b.features.cols()) {
    throw ValidationError("build_feature_seed: feature length differs between shops");
  }
  if (dims > features_a.features.cols()) {
    throw ValidationError("build_feature_seed: PCA dimension exceeds feature length");
  }
  if (clusters > features_a.size()) {
    throw ValidationError("build_feature_seed: more clusters than shop A products");
  }

  // One PCA space for both shops so cross-shop kNN is meaningful.
  Mat unioned(features_a.size() + features_b.size(), features_a.features.cols());
  unioned.topRows(features_a.size()) = features_a.features;
  unioned.bottomRows(features_b.size()) = features_b.features;
  const Pca pca = fit_pca(unioned, dims);
  const Mat proj_a = pca.transform(features_a.features);
  const Mat proj_b = pca.transform(features_b.features);

  Rng rng(rng_seed);
  const KMeansResult km = kmeans(proj_a, clusters, rng);

  // Normalized target rows for cosine retrieval.
  Mat b_norm = proj_b;
  for (int i = 0; i < b_norm.rows(); ++i) {
    const double n = b_norm.row(i).norm();
    if (n > 0) b_norm.row(i) /= n;
  }

  SeedDictionary seed;
  std::set<std::pair<int, int>> taken;
  for (int c = 0; c < clusters; ++c) {
    // The two members nearest this centroid are its sample points.
    std::vector<std::pair<double, int>> members;
    for (int i = 0; i < proj_a.rows(); ++i) {
      if (km.assignment[static_cast<std::size_t>(i)] == c) {
        members.emplace_back((proj_a.row(i) - km.centroids.row(c)).squaredNorm(), i);
      }
    }
    std::sort(members.begin(), members.end());
    const int take = std::min<int>(2, static_cast<int>(members.size()));
    for (int m = 0; m < take; ++m) {
      const int a_row = members[static_cast<std::size_t>(m)].second;
      Vec q = proj_a.row(a_row).transpose();
      const double qn = q.norm();
      int best = 0;
      double best_sim = -2.0;
      for (int j = 0; j < b_norm.rows(); ++j) {
        const double sim = qn == 0 ? 0.0 : b_norm.row(j).dot(q) / qn;
        if (sim > best_sim) { best_sim = sim; best = j; }
      }
      if (taken.insert({a_row, best}).second) {
        seed.pairs.push_back({features_a.ids[static_cast<std::size_t>(a_row)],
                              features_b.ids[static_cast<std::size_t>(best)], 1.0});
      }
    }
  }
  return seed;
}

namespace {

struct ResolvedPairs {
  std::vector<int> src, tgt;
  std::vector<double> weight;
};

ResolvedPairs resolve(const SeedDictionary& seed, const embed::EmbeddingTable& source,
                      const embed::EmbeddingTable& target) {
  ResolvedPairs out;
  for (const auto& p : seed.pairs) {
    if (p.weight <= 0) throw ValidationError("seed dictionary weights must be positive");
    auto s = source.vocab.id_of(p.source);
    auto t = target.vocab.id_of(p.target);
    if (s && t) {
      out.src.push_back(*s);
      out.tgt.push_back(*t);
      out.weight.push_back(p.weight);
    }
  }
  return out;
}

AlignmentMap procrustes_from_indices(const std::vector<int>& src, const std::vector<int>& tgt,
                                     const std::vector<double>& weight,
                                     const embed::EmbeddingTable& source,
                                     const embed::EmbeddingTable& target, Method method) {
  const auto d_s = source.u.cols();
  const auto d_t = target.u.cols();
  Mat cross = Mat::Zero(d_t, d_s);
  for (std::size_t i = 0; i < src.size(); ++i) {
    cross += weight[i] * target.u.row(tgt[i]).transpose() * source.u.row(src[i]);
  }
  if (cross.norm() < 1e-300) {
    throw ValidationError("procrustes_fit: degenerate cross-covariance");
  }
  Eigen::JacobiSVD<Mat> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentMap map;
  map.method = method;
  map.w = svd.matrixU() * svd.matrixV().transpose();
  return map;
}

}  // namespace

AlignmentMap procrustes_fit(const SeedDictionary& seed, const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target) {
  const ResolvedPairs pairs = resolve(seed, source, target);
  if (pairs.src.size() < 2) {
    throw ValidationError("procrustes_fit: need at least 2 resolvable pairs, have " +
                          std::to_string(pairs.src.size()));
  }
  return procrustes_from_indices(pairs.src, pairs.tgt, pairs.weight, source, target, Method::IM);
}

namespace {

Mat normalized_rows(const Mat& m) {
  Mat out = m;
  for (int i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

}  // namespace

std::vector<std::pair<int, int>> induce_dictionary(const AlignmentMap& map,
                                                   const embed::EmbeddingTable& source,
                                                   const embed::EmbeddingTable& target) {
  const Mat mapped = normalized_rows(source.u * map.w.transpose());
  const Mat tgt = normalized_rows(target.u);
  const Mat sims = mapped * tgt.transpose();  // n_s x n_t cosine matrix

  std::vector<int> best_for_src(static_cast<std::size_t>(sims.rows()));
  for (int i = 0; i < sims.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < sims.cols(); ++j) {
      if (sims(i, j) > sims(i, best)) best = j;
    }
    best_for_src[static_cast<std::size_t>(i)] = best;
  }
  std::vector<int> best_for_tgt(static_cast<std::size_t>(sims.cols()));
  for (int j = 0; j < sims.cols(); ++j) {
    int best = 0;
    for (int i = 1; i < sims.rows(); ++i) {
      if (sims(i, j) > sims(best, j)) best = i;
    }
    best_for_tgt[static_cast<std::size_t>(j)] = best;
  }

  std::vector<std::pair<int, int>> mutual;
  for (int i = 0; i < sims.rows(); ++i) {
    const int j = best_for_src[static_cast<std::size_t>(i)];
    if (best_for_tgt[static_cast<std::size_t>(j)] == i) mutual.emplace_back(i, j);
  }
  return mutual;
}

SelfLearningResult self_learning_align(const SeedDictionary& seed,
                                       const embed::EmbeddingTable& source,
                                       const embed::EmbeddingTable& target,
                                       const SelfLearningOptions& opts) {
  if (seed.pairs.empty()) throw ValidationError("self_learning_align: empty seed");
  SelfLearningResult res;
  res.map = procrustes_fit(seed, source, target);
  if (opts.max_iters == 0) return res;

  ResolvedPairs anchor = resolve(seed, source, target);
  // Norm-compensated pair weights make the weighted fit equivalent to
  // Procrustes on length-normalized rows: retrieval is cosine-based, so the
  // alternation should track directions, not the frequency-driven norms.
  const auto norm_weight = [&](int s, int t) {
    const double ns = source.u.row(s).norm(), nt = target.u.row(t).norm();
    return 1.0 / std::max(ns * nt, 1e-12);
  };
  for (std::size_t i = 0; i < anchor.src.size(); ++i) {
    anchor.weight[i] *= norm_weight(anchor.src[i], anchor.tgt[i]);
  }
  res.map = procrustes_from_indices(anchor.src, anchor.tgt, anchor.weight, source, target,
                                    res.map.method);

  std::vector<std::pair<int, int>> previous;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    auto dict = induce_dictionary(res.map, source, target);
    if (dict.empty()) {
      throw TrainingError("self_learning_align: induced dictionary is empty");
    }
    res.dictionary_sizes.push_back(static_cast<int>(dict.size()));
    if (dict == previous) {
      res.converged = true;
      res.dictionary = std::move(dict);
      break;
    }
    // Refit on seed + induced pairs. The seed's weight decays with the
    // induced dictionary's coverage: a dense dictionary (word-space regime)
    // replaces the seed outright, a sparse one (product spaces, where
    // mutual pairs are thin) stays anchored to it.
    const double coverage = static_cast<double>(dict.size()) /
                            std::min(source.size(), target.size());
    const double seed_weight = std::max(0.0, 1.0 - coverage);
    std::vector<int> src, tgt;
    std::vector<double> w;
    if (seed_weight > 0.0) {
      src = anchor.src;
      tgt = anchor.tgt;
      for (double sw : anchor.weight) w.push_back(sw * seed_weight);
    }
    for (auto& [i, j] : dict) {
      src.push_back(i);
      tgt.push_back(j);
      w.push_back(norm_weight(i, j));
    }
    res.map = procrustes_from_indices(src, tgt, w, source, target, res.map.method);
    previous = std::move(dict);
    res.dictionary = previous;
  }
  return res;
}

Mat similarity_signatures(const embed::EmbeddingTable& table, int signature_length) {
  const int n = table.size();
  if (n < 2) throw ValidationError("similarity_signatures: need at least 2 products");
  const Mat norm = normalized_rows(Mat(table.u));
  const Mat sims = norm * norm.transpose();
  Mat out(n, signature_length);
  std::vector<double> row(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (int j = 0; j < n; ++j) {
      if (j != i) row[m++] = sims(i, j);
    }
    std::sort(row.begin(), row.end(), std::greater<>());
    // Linear resample of the sorted similarity profile to a fixed length,
    // making signatures comparable across shops of different size.
    for (int s = 0; s < signature_length; ++s) {
      const double pos = signature_length == 1
                             ? 0.0
                             : static_cast<double>(s) * (static_cast<double>(m) - 1.0) /
                                   (signature_length - 1.0);
      const auto lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(m - 1, lo + 1);
      const double frac = pos - static_cast<double>(lo);
      out(i, s) = (1.0 - frac) * row[lo] + frac * row[hi];
    }
  }
  return out;
}

SelfLearningResult nm_align(const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target, const NmOptions& opts) {
  if (source.size() == 0 || target.size() == 0) {
    throw ValidationError("nm_align: empty embedding table");
  }
  const Mat sig_a = similarity_signatures(source, opts.signature_length);
  const Mat sig_b = similarity_signatures(target, opts.signature_length);

  // Mutual nearest pairs by signature distance form the weak seed.
  std::vector<int> best_a(static_cast<std::size_t>(sig_a.rows()));
  for (int i = 0; i < sig_a.rows(); ++i) {
    int best = 0;
    double best_d = (sig_a.row(i) - sig_b.row(0)).squaredNorm();
    for (int j = 1; j < sig_b.rows(); ++j) {
      const double d = (sig_a.row(i) - sig_b.row(j)).squaredNorm();
      if (d < best_d) { best_d = d; best = j; }
    }
    best_a[static_cast<std::size_t>(i)] = best;
  }
  std::vector<int> best_b(static_cast<std::size_t>(sig_b.rows()));
  for (int j = 0; j < sig_b.rows(); ++j) {
    int best = 0;
    double best_d = (sig_a.row(0) - sig_b.row(j)).squaredNorm();
    for (int i = 1; i < sig_a.rows(); ++i) {
      const double d = (sig_a.row(i) - sig_b.row(j)).squaredNorm();
      if (d < best_d) { best_d = d; best = i; }
    }
    best_b[static_cast<std::size_t>(j)] = best;
  }

  SeedDictionary seed;
  for (int i = 0; i < sig_a.rows(); ++i) {
    const int j = best_a[static_cast<std::size_t>(i)];
    if (best_b[static_cast<std::size_t>(j)] == i) {
      seed.pairs.push_back({source.vocab.product(i), target.vocab.product(j), 1.0});
    }
  }
  if (seed.pairs.size() < 2) {
    // Fall back to one-directional matches; mutual agreement can be thin
    // when the spaces are structurally dissimilar.
    seed.pairs.clear();
    for (int i = 0; i < sig_a.rows(); ++i) {
      seed.pairs.push_back(
          {source.vocab.product(i),
           target.vocab.product(best_a[static_cast<std::size_t>(i)]), 1.0});
    }
  }

  SelfLearningResult res = self_learning_align(seed, source, target, opts.self_learning);
  res.map.method = Method::NM;
  return res;
}

namespace {

/// Ridge least squares with unregularized bias: minimizes
/// sum ||W x_i + b - y_i||^2 + lambda ||W||_F^2.
AlignmentMap ridge_fit(const Mat& x, const Mat& y, double lambda, Method method) {
  const auto n = x.rows();
  const auto d = x.cols();
  Mat xa(n, d + 1);
  xa.leftCols(d) = x;
  xa.col(d).setOnes();
  Mat gram = xa.transpose() * xa;
  for (int i = 0; i < d; ++i) gram(i, i) += lambda;
  const Mat theta = gram.ldlt().solve(xa.transpose() * y);  // (d+1) x d_t
  AlignmentMap map;
  map.method = method;
  map.w = theta.topRows(d).transpose();
  map.bias = theta.row(d).transpose();
  return map;
}

}  // namespace

AlignmentMap pair_regression_align(const std::vector<corpus::CrossSession>& cross_sessions,
                                   const embed::EmbeddingTable& source,
                                   const embed::EmbeddingTable& target,
                                   const RegressionOptions& opts) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& cs : cross_sessions) {
    if (cs.source.products.empty() || cs.target.products.empty()) continue;
    auto s = source.vocab.id_of(cs.source.products.back());
    auto t = target.vocab.id_of(cs.target.products.front());
    if (s && t) pairs.emplace_back(*s, *t);
  }
  const int d = source.dimension();
  if (static_cast<int>(pairs.size()) < d) {
    throw ValidationError(
        "pair_regression_align: need at least " + std::to_string(d) + " extracted pairs, have " +
        std::to_string(pairs.size()) + "; consider the AM or IM method instead");
  }
  Mat x(static_cast<Eigen::Index>(pairs.size()), d);
  Mat y(static_cast<Eigen::Index>(pairs.size()), target.dimension());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = source.u.row(pairs[i].first);
    y.row(static_cast<Eigen::Index>(i)) = target.u.row(pairs[i].second);
  }
  return ridge_fit(x, y, opts.ridge_lambda, Method::UM);
}

AlignmentMap centroid_align(const Catalog& catalog_a, const Catalog& catalog_b,
                            int n_per_category, const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target, std::uint64_t rng_seed,
                            const RegressionOptions& opts) {
  if (n_per_category < 1) throw ValidationError("centroid_align: n_per_category must be >= 1");

  // Activities with at least one in-vocabulary product on each side.
  std::map<std::string, std::vector<int>> by_act_a, by_act_b;
  for (int i = 0; i < catalog_a.size(); ++i) {
    if (source.vocab.id_of(catalog_a.ids[static_cast<std::size_t>(i)])) {
      by_act_a[catalog_a.activities[static_cast<std::size_t>(i)]].push_back(i);
    }
  }
  for (int i = 0; i < catalog_b.size(); ++i) {
    if (target.vocab.id_of(catalog_b.ids[static_cast<std::size_t>(i)])) {
      by_act_b[catalog_b.activities[static_cast<std::size_t>(i)]].push_back(i);
    }
  }
  std::vector<std::string> shared;
  for (const auto& [act, rows] : by_act_a) {
    if (by_act_b.count(act)) shared.push_back(act);
  }
  if (shared.size() < 2) {
    throw ValidationError("centroid_align: need at least 2 shared activities, have " +
                          std::to_string(shared.size()));
  }

  Rng rng(rng_seed);
  const auto sample_centroid = [&](const std::vector<int>& rows, const Catalog& cat,
                                   const embed::EmbeddingTable& table) {
    std::vector<int> pool = rows;
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    const int take = std::min<int>(n_per_category, static_cast<int>(pool.size()));
    Vec centroid = Vec::Zero(table.dimension());
    for (int i = 0; i < take; ++i) {
      const auto id = table.vocab.id_of(cat.ids[static_cast<std::size_t>(pool[i])]);
      centroid += table.u.row(*id);
    }
    return Vec(centroid / take);
  };

  Mat x(static_cast<Eigen::Index>(shared.size()), source.dimension());
  Mat y(static_cast<Eigen::Index>(shared.size()), target.dimension());
  for (std::size_t i = 0; i < shared.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) =
        sample_centroid(by_act_a[shared[i]], catalog_a, source).transpose();
    y.row(static_cast<Eigen::Index>(i)) =
        sample_centroid(by_act_b[shared[i]], catalog_b, target).transpose();
  }
  return ridge_fit(x, y, opts.ridge_lambda, Method::AM);
}

}  // namespace shopalign::align
