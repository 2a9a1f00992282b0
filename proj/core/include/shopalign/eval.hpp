#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "shopalign/align.hpp"
#include "shopalign/corpus.hpp"
#include "shopalign/embed.hpp"
#include "shopalign/metrics.hpp"
#include "shopalign/tm.hpp"

namespace shopalign::eval {

struct SessionRecord {
  std::string session_id;
  int hit_rank = 0;         // 1-based rank of the first relevant hit, 0 = miss
  int top_prediction = -1;  // best candidate (index in the evaluated table)
  int target = -1;          // ground-truth index, -1 when out of vocabulary
  double ndcg = 0.0;
  int hit = 0;
};

struct EvalReport {
  std::string task;  // NEP, FIP, AIP, typeahead
  int k = 10;
  double ndcg = 0.0;
  double hit_rate = 0.0;
  double mrr = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // sessions with no in-vocabulary intent
  std::vector<SessionRecord> records;
};

struct NepOptions {
  int k = 10;
  // When set, products already seen in the session prefix are removed from
  // the candidate list.
  bool exclude_seen = false;
};

/// Next Event Prediction: the session vector of e_1..e_{n-1} queries the
/// nearest neighbors, REL = {e_n}.
EvalReport nep_within_shop(const std::vector<corpus::Session>& sessions,
                           const embed::EmbeddingTable& table, const NepOptions& opts = {});

// ---- hyperparameter grid ----------------------------------------------

struct GridSpec {
  std::vector<int> min_counts{2, 3, 5, 10, 15, 30};
  std::vector<int> windows{2, 3, 5, 10, 15};
  std::vector<int> epochs{5, 10, 20, 30, 50};
  std::vector<double> ns_exponents{-1.0, -0.5, 0.0, 0.75, 1.0};
  embed::TrainConfig base;  // dimension, negatives, learning rate, seed
};

std::vector<embed::TrainConfig> expand_grid(const GridSpec& spec);
std::vector<embed::TrainConfig> subsample_grid(std::vector<embed::TrainConfig> grid,
                                               int max_configs, std::uint64_t seed);

/// Reproducible 80/10/10 split by hash of session id.
enum class Split { Train, Validation, Test };
Split split_of(const std::string& session_id);
std::vector<corpus::Session> take_split(const std::vector<corpus::Session>& sessions, Split s);

struct GridEntry {
  embed::TrainConfig config;
  double ndcg = 0.0;
  double hit_rate = 0.0;
};

struct GridOptions {
  int k = 10;
};

/// Trains one model per config on the train split and ranks configs by
/// NDCG@k of NEP on the validation split, descending.
std::vector<GridEntry> grid_search(const std::vector<corpus::Session>& sessions,
                                   const std::vector<embed::TrainConfig>& configs,
                                   const GridOptions& opts = {});

// ---- cross-shop benchmark ---------------------------------------------

/// Candidate rankings (target-table indices) for one source session:
/// first-item and any-item task rankings. Throws ValidationError on an
/// empty intent, which the evaluator counts as skipped.
struct CrossPrediction {
  std::vector<int> fip_ranking;
  std::vector<int> aip_ranking;
};
using CrossRanker = std::function<CrossPrediction(const corpus::Session& source)>;

CrossRanker make_map_ranker(const align::AlignmentMap& map, const embed::EmbeddingTable& source,
                            const embed::EmbeddingTable& target, int k);
CrossRanker make_tm_ranker(const align::TranslationModel& model, int k);
CrossRanker make_static_ranker(std::vector<int> ranking);

/// Products of the training corpus ranked by frequency, descending, ties by
/// product index (the PM baseline).
std::vector<int> popularity_baseline(const std::vector<corpus::Session>& sessions,
                                     const corpus::Vocabulary& vocab);

struct CrossShopReports {
  EvalReport fip;
  EvalReport aip;
};

CrossShopReports cross_shop_eval(const std::vector<corpus::CrossSession>& cross_sessions,
                                 const CrossRanker& ranker,
                                 const embed::EmbeddingTable& target, int k = 10);

// ---- qualitative stack --------------------------------------------------

/// Top-2 principal component coordinates per product, for external plotting.
Mat projection_2d(const embed::EmbeddingTable& table);

struct MissRecord {
  std::string session_id;
  int predicted = -1;
  int target = -1;
  double distance = 0.0;  // cosine distance in the shared space
  bool activity_match = false;
};

struct ErrorAnalysis {
  std::vector<MissRecord> misses;  // ascending distance
  double median_distance = 0.0;
  // Activity-match rates; meaningful only when labels were supplied.
  double overall_match_rate = 0.0;
  double below_median_match_rate = 0.0;
  double above_median_match_rate = 0.0;
  bool has_labels = false;
};

/// Distance-ranked study of the report's misses. `labels` maps target-table
/// indices to activity labels when available.
ErrorAnalysis error_analysis(const EvalReport& report, const embed::EmbeddingTable& target,
                             const std::vector<std::string>* labels = nullptr);

}  // namespace shopalign::eval
