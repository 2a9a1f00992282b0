#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "shopalign/corpus.hpp"
#include "shopalign/linalg.hpp"

namespace shopalign::embed {

struct TrainConfig {
  int dimension = 48;
  int window = 5;
  int epochs = 5;
  int min_count = 5;
  double ns_exponent = 0.75;
  int negatives_per_positive = 5;
  double learning_rate = 0.025;
  double min_learning_rate = 1e-4;
  std::uint64_t rng_seed = 1;
  // >1 enables hogwild-style data-parallel training (nondeterministic).
  int threads = 1;

  void validate() const;
};

/// Center (U) and context (V) vector tables over a product vocabulary.
struct EmbeddingTable {
  corpus::Vocabulary vocab;
  MatRM u;  // |P| x d center vectors, used for all inference
  MatRM v;  // |P| x d context vectors

  int dimension() const { return static_cast<int>(u.cols()); }
  int size() const { return vocab.size(); }
};

/// Unigram table with probabilities proportional to count^exponent.
class NegativeSampler {
 public:
  NegativeSampler(const corpus::Vocabulary& vocab, double ns_exponent);

  int sample(Rng& rng) const { return sampler_.sample(rng); }
  const std::vector<double>& probabilities() const { return sampler_.probabilities(); }

 private:
  WeightedSampler sampler_;
};

NegativeSampler build_negative_sampler(const corpus::Vocabulary& vocab, double ns_exponent);

/// One CBOW training example: a center product, its window context and the
/// drawn negatives.
struct CbowInstance {
  int center = 0;
  std::vector<int> context;
  std::vector<int> negatives;
};

struct CbowGradients {
  // Sparse row gradients of the maximized objective.
  std::unordered_map<int, Vec> u;
  std::unordered_map<int, Vec> v;
};

struct CbowValue {
  double objective = 0.0;  // sum of log-sigmoid terms, <= 0
  CbowGradients gradients;
};

/// Analytic objective value and gradients for a batch of instances.
/// Pure function of the inputs; used by training and by the tests'
/// finite-difference checks.
CbowValue loss_and_gradient(const std::vector<CbowInstance>& batch, const EmbeddingTable& table);

struct TrainStats {
  // Negated mean objective per instance for each epoch.
  std::vector<double> epoch_mean_loss;
  std::size_t instances_per_epoch = 0;
};

/// Trains CBOW with negative sampling over the sessions. The vocabulary is
/// built internally with config.min_count; sessions are restricted to it.
/// Deterministic for fixed (sessions, config) when threads == 1.
EmbeddingTable train(const std::vector<corpus::Session>& sessions, const TrainConfig& config,
                     TrainStats* stats = nullptr);

/// Mean of the U rows of in-vocabulary products; out-of-vocabulary events
/// are skipped. Throws ValidationError when nothing is in vocabulary.
Vec session_vector(const std::vector<std::string>& products, const EmbeddingTable& table);
Vec session_vector_ids(const std::vector<int>& ids, const EmbeddingTable& table);

struct Scored {
  int id = 0;
  double similarity = 0.0;
};

/// Top-k products by cosine similarity to the query, descending, ties by
/// ascending product index. k larger than the vocabulary returns everything.
std::vector<Scored> nearest_neighbors(const Vec& query, const EmbeddingTable& table, int k);

}  // namespace shopalign::embed
