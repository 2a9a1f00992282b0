#include "shopalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace shopalign::eval {

namespace {

constexpr int kOovTarget = -1;

void finalize(EvalReport& report) {
  if (report.evaluated == 0) return;
  double ndcg = 0.0, hits = 0.0, rr = 0.0;
  for (const auto& r : report.records) {
    ndcg += r.ndcg;
    hits += r.hit;
    if (r.hit_rank > 0) rr += 1.0 / r.hit_rank;
  }
  const double n = static_cast<double>(report.evaluated);
  report.ndcg = ndcg / n;
  report.hit_rate = hits / n;
  report.mrr = rr / n;
}

SessionRecord score_session(const std::string& session_id, const std::vector<int>& ranking,
                            const std::unordered_set<int>& rel, int k) {
  SessionRecord rec;
  rec.session_id = session_id;
  rec.top_prediction = ranking.empty() ? -1 : ranking.front();
  RankedPrediction pred{ranking, rel};
  rec.ndcg = ndcg_at_k(pred, k);
  rec.hit = hit_at_k(pred, k);
  const int top = std::min<int>(k, static_cast<int>(ranking.size()));
  for (int i = 0; i < top; ++i) {
    if (rel.count(ranking[static_cast<std::size_t>(i)])) {
      rec.hit_rank = i + 1;
      break;
    }
  }
  return rec;
}

}  // namespace

EvalReport nep_within_shop(const std::vector<corpus::Session>& sessions,
                           const embed::EmbeddingTable& table, const NepOptions& opts) {
  EvalReport report;
  report.task = "NEP";
  report.k = opts.k;
  for (const auto& s : sessions) {
    if (s.products.size() < 2) continue;
    std::vector<int> prefix_ids;
    for (std::size_t i = 0; i + 1 < s.products.size(); ++i) {
      if (auto id = table.vocab.id_of(s.products[i])) prefix_ids.push_back(*id);
    }
    if (prefix_ids.empty()) {
      ++report.skipped;
      continue;
    }
    const Vec intent = embed::session_vector_ids(prefix_ids, table);
    const int fetch = opts.exclude_seen
                          ? opts.k + static_cast<int>(prefix_ids.size())
                          : opts.k;
    auto neighbors = embed::nearest_neighbors(intent, table, fetch);
    std::vector<int> ranking;
    ranking.reserve(neighbors.size());
    if (opts.exclude_seen) {
      std::unordered_set<int> seen(prefix_ids.begin(), prefix_ids.end());
      for (const auto& n : neighbors) {
        if (!seen.count(n.id)) ranking.push_back(n.id);
      }
      if (static_cast<int>(ranking.size()) > opts.k) ranking.resize(static_cast<std::size_t>(opts.k));
    } else {
      for (const auto& n : neighbors) ranking.push_back(n.id);
    }

    const auto target = table.vocab.id_of(s.products.back());
    std::unordered_set<int> rel{target ? *target : kOovTarget};
    auto rec = score_session(s.session_id, ranking, rel, opts.k);
    rec.target = target ? *target : kOovTarget;
    report.records.push_back(std::move(rec));
    ++report.evaluated;
  }
  finalize(report);
  return report;
}

std::vector<embed::TrainConfig> expand_grid(const GridSpec& spec) {
  std::vector<embed::TrainConfig> out;
  for (int mc : spec.min_counts) {
    for (int w : spec.windows) {
      for (int ep : spec.epochs) {
        for (double ns : spec.ns_exponents) {
          embed::TrainConfig cfg = spec.base;
          cfg.min_count = mc;
          cfg.window = w;
          cfg.epochs = ep;
          cfg.ns_exponent = ns;
          out.push_back(cfg);
        }
      }
    }
  }
  return out;
}

std::vector<embed::TrainConfig> subsample_grid(std::vector<embed::TrainConfig> grid,
                                               int max_configs, std::uint64_t seed) {
  if (max_configs < 1) throw ValidationError("subsample_grid: max_configs must be >= 1");
  if (static_cast<int>(grid.size()) <= max_configs) return grid;
  Rng rng(seed);
  std::shuffle(grid.begin(), grid.end(), rng.engine());
  grid.resize(static_cast<std::size_t>(max_configs));
  return grid;
}

Split split_of(const std::string& session_id) {
  const auto bucket = fnv1a(session_id) % 10;
  if (bucket < 8) return Split::Train;
  return bucket == 8 ? Split::Validation : Split::Test;
}

std::vector<corpus::Session> take_split(const std::vector<corpus::Session>& sessions, Split s) {
  std::vector<corpus::Session> out;
  for (const auto& sess : sessions) {
    if (split_of(sess.session_id) == s) out.push_back(sess);
  }
  return out;
}

std::vector<GridEntry> grid_search(const std::vector<corpus::Session>& sessions,
                                   const std::vector<embed::TrainConfig>& configs,
                                   const GridOptions& opts) {
  if (configs.empty()) throw ValidationError("grid_search: empty grid");
  const auto train_split = take_split(sessions, Split::Train);
  const auto valid_split = take_split(sessions, Split::Validation);
  if (train_split.empty() || valid_split.empty()) {
    throw ValidationError("grid_search: split produced an empty train or validation set");
  }

  std::vector<GridEntry> entries;
  entries.reserve(configs.size());
  for (const auto& cfg : configs) {
    try {
      embed::EmbeddingTable table = embed::train(train_split, cfg);
      const EvalReport rep = nep_within_shop(valid_split, table, {.k = opts.k});
      entries.push_back({cfg, rep.ndcg, rep.hit_rate});
    } catch (const Error& e) {
      throw TrainingError(std::string(e.what()) + " [config: min_count=" +
                          std::to_string(cfg.min_count) + " window=" + std::to_string(cfg.window) +
                          " epochs=" + std::to_string(cfg.epochs) +
                          " ns_exponent=" + std::to_string(cfg.ns_exponent) + "]");
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const GridEntry& a, const GridEntry& b) { return a.ndcg > b.ndcg; });
  return entries;
}

CrossRanker make_map_ranker(const align::AlignmentMap& map, const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target, int k) {
  return [&map, &source, &target, k](const corpus::Session& src) {
    const Vec intent = embed::session_vector(src.products, source);
    const Vec mapped = align::translate_point(map, intent);
    auto neighbors = embed::nearest_neighbors(mapped, target, k);
    CrossPrediction pred;
    pred.fip_ranking.reserve(neighbors.size());
    for (const auto& n : neighbors) pred.fip_ranking.push_back(n.id);
    pred.aip_ranking = pred.fip_ranking;
    return pred;
  };
}

CrossRanker make_tm_ranker(const align::TranslationModel& model, int k) {
  return [&model, k](const corpus::Session& src) {
    const auto tm_pred = align::tm_predict(model, src, k);
    CrossPrediction pred;
    for (const auto& s : tm_pred.fip) pred.fip_ranking.push_back(s.id);
    for (const auto& s : tm_pred.aip) pred.aip_ranking.push_back(s.id);
    return pred;
  };
}

CrossRanker make_static_ranker(std::vector<int> ranking) {
  return [ranking = std::move(ranking)](const corpus::Session&) {
    CrossPrediction pred;
    pred.fip_ranking = ranking;
    pred.aip_ranking = ranking;
    return pred;
  };
}

std::vector<int> popularity_baseline(const std::vector<corpus::Session>& sessions,
                                     const corpus::Vocabulary& vocab) {
  if (sessions.empty()) throw ValidationError("popularity_baseline: empty corpus");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(vocab.size()), 0);
  for (const auto& s : sessions) {
    for (const auto& p : s.products) {
      if (auto id = vocab.id_of(p)) ++counts[static_cast<std::size_t>(*id)];
    }
  }
  std::vector<int> ranking(static_cast<std::size_t>(vocab.size()));
  for (int i = 0; i < vocab.size(); ++i) ranking[static_cast<std::size_t>(i)] = i;
  std::sort(ranking.begin(), ranking.end(), [&](int a, int b) {
    if (counts[static_cast<std::size_t>(a)] != counts[static_cast<std::size_t>(b)]) {
      return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  return ranking;
}

CrossShopReports cross_shop_eval(const std::vector<corpus::CrossSession>& cross_sessions,
                                 const CrossRanker& ranker, const embed::EmbeddingTable& target,
                                 int k) {
  CrossShopReports reports;
  reports.fip.task = "FIP";
  reports.aip.task = "AIP";
  reports.fip.k = reports.aip.k = k;

  for (const auto& cs : cross_sessions) {
    if (cs.source.products.empty() || cs.target.products.empty()) continue;
    CrossPrediction pred;
    try {
      pred = ranker(cs.source);
    } catch (const ValidationError&) {
      ++reports.fip.skipped;
      ++reports.aip.skipped;
      continue;
    }

    const auto first = target.vocab.id_of(cs.target.products.front());
    std::unordered_set<int> fip_rel{first ? *first : kOovTarget};
    auto fip_rec = score_session(cs.source.session_id, pred.fip_ranking, fip_rel, k);
    fip_rec.target = first ? *first : kOovTarget;
    reports.fip.records.push_back(std::move(fip_rec));
    ++reports.fip.evaluated;

    std::unordered_set<int> aip_rel;
    for (const auto& p : cs.target.products) {
      if (auto id = target.vocab.id_of(p)) aip_rel.insert(*id);
    }
    if (aip_rel.empty()) aip_rel.insert(kOovTarget);
    auto aip_rec = score_session(cs.source.session_id, pred.aip_ranking, aip_rel, k);
    aip_rec.target = first ? *first : kOovTarget;
    reports.aip.records.push_back(std::move(aip_rec));
    ++reports.aip.evaluated;
  }
  finalize(reports.fip);
  finalize(reports.aip);
  return reports;
}

Mat projection_2d(const embed::EmbeddingTable& table) {
  if (table.size() < 3) throw ValidationError("projection_2d: need at least 3 products");
  const Pca pca = fit_pca(Mat(table.u), 2);
  return pca.transform(Mat(table.u));
}

ErrorAnalysis error_analysis(const EvalReport& report, const embed::EmbeddingTable& target,
                             const std::vector<std::string>* labels) {
  ErrorAnalysis out;
  out.has_labels = labels != nullptr;
  for (const auto& rec : report.records) {
    if (rec.hit_rank != 0) continue;  // hits are not misses
    if (rec.target < 0 || rec.top_prediction < 0) continue;
    MissRecord miss;
    miss.session_id = rec.session_id;
    miss.predicted = rec.top_prediction;
    miss.target = rec.target;
    miss.distance = 1.0 - cosine(target.u.row(rec.top_prediction).transpose(),
                                 target.u.row(rec.target).transpose());
    if (labels) {
      miss.activity_match = (*labels)[static_cast<std::size_t>(miss.predicted)] ==
                            (*labels)[static_cast<std::size_t>(miss.target)];
    }
    out.misses.push_back(std::move(miss));
  }
  std::sort(out.misses.begin(), out.misses.end(),
            [](const MissRecord& a, const MissRecord& b) { return a.distance < b.distance; });
  if (out.misses.empty()) return out;

  out.median_distance = out.misses[out.misses.size() / 2].distance;
  if (!labels) return out;

  std::size_t below_n = 0, below_match = 0, above_n = 0, above_match = 0, all_match = 0;
  for (const auto& m : out.misses) {
    if (m.activity_match) ++all_match;
    if (m.distance < out.median_distance) {
      ++below_n;
      if (m.activity_match) ++below_match;
    } else {
      ++above_n;
      if (m.activity_match) ++above_match;
    }
  }
  out.overall_match_rate = static_cast<double>(all_match) / out.misses.size();
  out.below_median_match_rate = below_n ? static_cast<double>(below_match) / below_n : 0.0;
  out.above_median_match_rate = above_n ? static_cast<double>(above_match) / above_n : 0.0;
  return out;
}

}  // namespace shopalign::eval
