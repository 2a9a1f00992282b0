#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shopalign/corpus.hpp"
#include "shopalign/linalg.hpp"
#include "shopalign/metrics.hpp"
#include "shopalign/rnn.hpp"

namespace shopalign::typeahead {

struct QueryItem {
  std::string query;
  corpus::Session session;  // the browsing session the query belongs to
  std::string shop_id;
};

/// Character inventory of a query corpus plus a terminator symbol.
class Charset {
 public:
  Charset() = default;
  explicit Charset(const std::vector<QueryItem>& items);

  int size() const { return static_cast<int>(chars_.size()); }      // without terminator
  int terminator() const { return size(); }
  int vocab_size() const { return size() + 1; }
  std::optional<int> index_of(char c) const;
  char at(int idx) const { return chars_[static_cast<std::size_t>(idx)]; }
  const std::string& chars() const { return chars_; }

 private:
  std::string chars_;
};

struct LmConfig {
  int hidden = 64;
  int char_dim = 16;
  int epochs = 25;
  // Per-query gradients are means over the characters, so the step size is
  // an order larger than a per-character schedule would use.
  double learning_rate = 1.0;
  double min_learning_rate = 0.02;
  double clip_norm = 5.0;
  std::uint64_t rng_seed = 1;
};

/// Conditional character-level language model: a gated recurrent cell whose
/// initial hidden state is a projection of the shopper intent vector.
struct CondLM {
  Charset charset;
  int intent_dim = 0;
  Mat char_embed;    // vocab_size x char_dim (terminator row unused as input)
  Mat intent_proj;   // hidden x intent_dim
  Vec intent_bias;   // hidden
  rnn::GruParams cell;
  Mat w_out;         // vocab_size x hidden
  Vec b_out;
  LmConfig config;
};

struct LmGradients {
  Mat char_embed, intent_proj;
  Vec intent_bias;
  rnn::GruGrads cell;
  Mat w_out;
  Vec b_out;

  explicit LmGradients(const CondLM& m);
  void set_zero();
  double squared_norm() const;
  void scale(double s);
};

/// Mean per-character teacher-forced cross-entropy (terminator included)
/// of `query` under the intent vector. Zero intent when none.
double lm_query_loss(const CondLM& model, const std::string& query, const Vec& intent);
double lm_query_backward(const CondLM& model, const std::string& query, const Vec& intent,
                         LmGradients& grads);

struct LmTrainStats {
  std::vector<double> epoch_mean_loss;
  std::size_t queries_used = 0;
};

/// Trains the conditional LM. `intents` supplies one intent vector per item
/// (already in the target space); entries may be absent for unconditioned
/// training, in which case a zero intent is used.
CondLM lm_train(const std::vector<QueryItem>& corpus,
                const std::vector<std::optional<Vec>>& intents, int intent_dim,
                const LmConfig& config, LmTrainStats* stats = nullptr);

struct ScoredCompletion {
  std::string text;
  double log_prob = 0.0;
};

/// Per-character argmax continuation of `prefix` until the terminator or
/// max_len characters. Used by memorization checks and intent contrasts.
std::string lm_greedy_complete(const CondLM& model, const std::optional<Vec>& intent,
                               const std::string& prefix, int max_len = 64);

/// Sums per-character log-probabilities (terminator included) of each
/// candidate under the intent, descending, ties by ascending text. Every
/// candidate must extend the prefix; prefix length SL may be 0.
std::vector<ScoredCompletion> score_completions(const CondLM& model,
                                                const std::optional<Vec>& intent,
                                                const std::string& prefix,
                                                const std::vector<std::string>& candidates);

struct TypeaheadItem {
  std::string ground_truth;
  std::optional<Vec> intent;  // transferred intent, absent to skip conditioning
};

struct TypeaheadReport {
  double mrr = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

struct CandidatePool {
  std::vector<std::string> queries;  // popularity order, most popular first
};

/// Builds the popularity pool from training queries (top M by frequency).
CandidatePool popularity_pool(const std::vector<QueryItem>& training, int top_m = 35);

/// MRR@k at seed length SL: per item the pool (prefix-filtered, ground truth
/// added) is ranked by the model, or by popularity when `model` is null.
TypeaheadReport typeahead_eval(const CondLM* model, const CandidatePool& pool,
                               const std::vector<TypeaheadItem>& items, int seed_length,
                               int k = 5);

}  // namespace shopalign::typeahead
