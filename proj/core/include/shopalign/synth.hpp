#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "shopalign/catalog.hpp"
#include "shopalign/corpus.hpp"
#include "shopalign/typeahead.hpp"

namespace shopalign::synth {

/// Normalized weights proportional to r^(-alpha) * exp(-r / cutoff) over
/// ranks r = 1..size.
std::vector<double> truncated_power_law_weights(double alpha, double cutoff, int size);

struct PowerLawFit {
  double alpha = 0.0;
  double cutoff = 0.0;
  double log_likelihood = 0.0;
};

/// Maximum-likelihood fit of the discrete truncated power law by profile
/// likelihood over (alpha, cutoff). `support` bounds the normalization sum;
/// 0 means effectively unbounded. Observations are positive ranks.
PowerLawFit fit_power_law_exponent(const std::vector<int>& observations, int support = 0);

/// Kolmogorov-Smirnov distance between the empirical distribution of the
/// observations and the configured law over ranks 1..size.
double ks_distance(const std::vector<int>& observations, double alpha, double cutoff, int size);

struct SynthConfig {
  int products_a = 230;
  int products_b = 420;
  int num_activities = 10;
  int sessions_a = 30000;
  int sessions_b = 110000;
  double alpha_a = 2.32;
  double alpha_b = 2.72;
  double cutoff = 50.0;
  double intra_activity_prob = 0.9;
  double intent_drift_prob = 0.15;
  // Probability that a stable-intent pair opens the target session on the
  // product corresponding to the last source product.
  double correspondence_prob = 0.35;
  // Probability that a later target product is the counterpart of some
  // source product (stable-intent pairs only).
  double correspondence_rest_prob = 0.4;
  // Probability that an otherwise free first target product is the
  // activity's designated landing product.
  double landing_prob = 0.30;
  int feature_dim = 32;
  double feature_noise = 0.5;
  std::string shop_id_a = "A";
  std::string shop_id_b = "B";
  std::uint64_t rng_seed = 1;

  void validate() const;
};

/// Named scale presets for the CLI ("paper-scale-0.01", "ci-small").
SynthConfig preset(const std::string& name);

struct GroundTruth {
  // Injective where defined: products instantiating the same latent
  // prototype in both shops.
  std::vector<std::pair<std::string, std::string>> correspondence;
  std::unordered_map<std::string, std::string> a_to_b;
  std::unordered_map<std::string, std::string> activity_a, activity_b;
  // Planted within-activity popularity rank of every product.
  std::unordered_map<std::string, int> rank_a, rank_b;
};

struct SynthData {
  std::vector<corpus::Event> events_a, events_b;
  Catalog catalog_a, catalog_b;
  GroundTruth truth;
};

SynthData generate_shops(const SynthConfig& config);

std::vector<corpus::CrossSession> generate_cross_sessions(const SynthConfig& config,
                                                          const SynthData& shops, int count);

/// Within-activity popularity ranks of an event stream, the observations the
/// calibration fit and KS check run on.
std::vector<int> rank_observations(const std::vector<corpus::Event>& events,
                                   const std::unordered_map<std::string, int>& ranks);

/// Activity names and per-activity query templates used by the synthetic
/// query corpora. Two activities deliberately share a first letter so a
/// 1-character prefix can disambiguate intents.
std::vector<std::string> activity_names(int n);
std::vector<std::string> query_templates(const std::string& activity);

struct QueryCorpora {
  std::vector<typeahead::QueryItem> train;       // target-shop sessions with queries
  std::vector<typeahead::QueryItem> cross_truth; // ground-truth queries of cross pairs
};

/// Samples activity-keyed queries: training queries for target-shop sessions
/// and ground-truth queries for the target half of each cross pair.
QueryCorpora generate_queries(const SynthConfig& config, const SynthData& shops,
                              const std::vector<corpus::CrossSession>& cross_sessions,
                              int train_count);

}  // namespace shopalign::synth
