#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shopalign/embed.hpp"
#include "shopalign/linalg.hpp"

namespace shopalign::eval {

struct ProbeConfig {
  int hidden = 64;
  double dropout = 0.5;
  double learning_rate = 0.05;
  int epochs = 50;
  std::uint64_t rng_seed = 1;
};

/// Two relu hidden layers with dropout in between, softmax output, trained
/// by plain SGD; predicts the activity of an embedding row.
struct ActivityProbe {
  Mat w1, w2, w3;
  Vec b1, b2, b3;
  std::vector<std::string> classes;

  Vec forward(const Vec& x) const;  // class probabilities
  int predict(const Vec& x) const;
};

ActivityProbe train_probe(const Mat& x, const std::vector<int>& y, int num_classes,
                          const ProbeConfig& cfg);

double probe_accuracy(const ActivityProbe& probe, const Mat& x, const std::vector<int>& y);

/// Splits the labelled rows of `table` into train/test (by shuffled
/// fraction) and returns held-out accuracy. Labels are per product id.
double probe_train_eval(const embed::EmbeddingTable& table,
                        const std::vector<std::string>& labels, double test_fraction,
                        const ProbeConfig& cfg);

/// Transfer mode: trains on (x_train, labels_train), evaluates on
/// (x_test, labels_test) with the class inventory of the training labels.
double probe_transfer_eval(const Mat& x_train, const std::vector<std::string>& labels_train,
                           const Mat& x_test, const std::vector<std::string>& labels_test,
                           const ProbeConfig& cfg);

}  // namespace shopalign::eval
