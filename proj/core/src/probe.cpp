#include "shopalign/probe.hpp"

#include <algorithm>
#include <map>

#include "shopalign/rnn.hpp"

namespace shopalign::eval {

namespace {

Vec relu(const Vec& x) { return x.cwiseMax(0.0); }

Mat glorot(int rows, int cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

std::vector<int> encode_labels(const std::vector<std::string>& labels,
                               std::vector<std::string>& classes) {
  std::map<std::string, int> index;
  for (const auto& l : labels) index.emplace(l, 0);
  classes.clear();
  for (auto& [name, id] : index) {
    id = static_cast<int>(classes.size());
    classes.push_back(name);
  }
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(index[l]);
  return out;
}

// Probe inputs are length-normalized: activity lives in the direction of an
// embedding, while the norm mostly tracks frequency and differs across shops.
Mat normalized_inputs(const Mat& x) {
  Mat out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > 0) out.row(i) /= n;
  }
  return out;
}

void check_class_counts(const std::vector<int>& y, int num_classes) {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (int c : y) ++counts[static_cast<std::size_t>(c)];
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) {
      throw ValidationError("probe: class " + std::to_string(c) + " has fewer than 2 examples");
    }
  }
}

}  // namespace

Vec ActivityProbe::forward(const Vec& x) const {
  const Vec h1 = relu(w1 * x + b1);
  const Vec h2 = relu(w2 * h1 + b2);
  return rnn::softmax(w3 * h2 + b3);
}

int ActivityProbe::predict(const Vec& x) const {
  int arg = 0;
  forward(x).maxCoeff(&arg);
  return arg;
}

ActivityProbe train_probe(const Mat& x, const std::vector<int>& y, int num_classes,
                          const ProbeConfig& cfg) {
  if (x.rows() != static_cast<Eigen::Index>(y.size())) {
    throw ValidationError("train_probe: rows and labels disagree");
  }
  if (num_classes < 2) throw ValidationError("train_probe: need at least 2 classes");
  check_class_counts(y, num_classes);

  Rng rng(cfg.rng_seed);
  ActivityProbe p;
  p.w1 = glorot(cfg.hidden, static_cast<int>(x.cols()), rng);
  p.b1 = Vec::Zero(cfg.hidden);
  p.w2 = glorot(cfg.hidden, cfg.hidden, rng);
  p.b2 = Vec::Zero(cfg.hidden);
  p.w3 = glorot(num_classes, cfg.hidden, rng);
  p.b3 = Vec::Zero(num_classes);

  std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const double keep = 1.0 - cfg.dropout;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t i : order) {
      const Vec in = x.row(static_cast<Eigen::Index>(i)).transpose();
      const Vec a1 = p.w1 * in + p.b1;
      Vec h1 = relu(a1);
      // Inverted dropout between the dense layers.
      Vec mask1 = Vec::Zero(h1.size());
      for (int j = 0; j < h1.size(); ++j) {
        if (keep >= 1.0 || rng.uniform() < keep) mask1(j) = 1.0 / keep;
      }
      h1 = h1.cwiseProduct(mask1);
      const Vec a2 = p.w2 * h1 + p.b2;
      Vec h2 = relu(a2);
      Vec mask2 = Vec::Zero(h2.size());
      for (int j = 0; j < h2.size(); ++j) {
        if (keep >= 1.0 || rng.uniform() < keep) mask2(j) = 1.0 / keep;
      }
      h2 = h2.cwiseProduct(mask2);

      Vec dlogits;
      rnn::softmax_cross_entropy(p.w3 * h2 + p.b3, y[i], &dlogits);

      const Vec dh2 = (p.w3.transpose() * dlogits).cwiseProduct(mask2)
                          .cwiseProduct((a2.array() > 0.0).cast<double>().matrix());
      const Vec dh1 = (p.w2.transpose() * dh2).cwiseProduct(mask1)
                          .cwiseProduct((a1.array() > 0.0).cast<double>().matrix());

      const double lr = cfg.learning_rate;
      p.w3 -= lr * dlogits * h2.transpose();
      p.b3 -= lr * dlogits;
      p.w2 -= lr * dh2 * h1.transpose();
      p.b2 -= lr * dh2;
      p.w1 -= lr * dh1 * in.transpose();
      p.b1 -= lr * dh1;
    }
  }
  return p;
}

double probe_accuracy(const ActivityProbe& probe, const Mat& x, const std::vector<int>& y) {
  if (y.empty()) throw ValidationError("probe_accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (probe.predict(x.row(i).transpose()) == y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

double probe_train_eval(const embed::EmbeddingTable& table,
                        const std::vector<std::string>& labels, double test_fraction,
                        const ProbeConfig& cfg) {
  if (static_cast<int>(labels.size()) != table.size()) {
    throw ValidationError("probe_train_eval: one label per product required");
  }
  if (test_fraction <= 0.0 || test_fraction >= 1.0) {
    throw ValidationError("probe_train_eval: test_fraction must be in (0, 1)");
  }
  std::vector<std::string> classes;
  const std::vector<int> y = encode_labels(labels, classes);

  Rng rng(derive_seed(cfg.rng_seed, "probe-split"));
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng.engine());
  const std::size_t test_n =
      std::max<std::size_t>(1, static_cast<std::size_t>(test_fraction * labels.size()));

  const Mat rows = normalized_inputs(Mat(table.u));
  Mat x_test(static_cast<Eigen::Index>(test_n), table.dimension());
  std::vector<int> y_test;
  Mat x_train(static_cast<Eigen::Index>(labels.size() - test_n), table.dimension());
  std::vector<int> y_train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < test_n) {
      x_test.row(static_cast<Eigen::Index>(y_test.size())) = rows.row(static_cast<Eigen::Index>(order[i]));
      y_test.push_back(y[order[i]]);
    } else {
      x_train.row(static_cast<Eigen::Index>(y_train.size())) = rows.row(static_cast<Eigen::Index>(order[i]));
      y_train.push_back(y[order[i]]);
    }
  }
  const ActivityProbe probe =
      train_probe(x_train, y_train, static_cast<int>(classes.size()), cfg);
  return probe_accuracy(probe, x_test, y_test);
}

double probe_transfer_eval(const Mat& x_train, const std::vector<std::string>& labels_train,
                           const Mat& x_test, const std::vector<std::string>& labels_test,
                           const ProbeConfig& cfg) {
  std::vector<std::string> classes;
  const std::vector<int> y_train = encode_labels(labels_train, classes);
  std::vector<int> y_test;
  y_test.reserve(labels_test.size());
  for (const auto& l : labels_test) {
    const auto it = std::find(classes.begin(), classes.end(), l);
    if (it == classes.end()) {
      throw ValidationError("probe_transfer_eval: test label '" + l + "' unseen in training");
    }
    y_test.push_back(static_cast<int>(it - classes.begin()));
  }
  const ActivityProbe probe = train_probe(normalized_inputs(x_train), y_train,
                                          static_cast<int>(classes.size()), cfg);
  return probe_accuracy(probe, normalized_inputs(x_test), y_test);
}

}  // namespace shopalign::eval
