#include "shopalign/embed.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace shopalign::embed {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(sigmoid(x)) without underflow at strongly negative scores.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

void TrainConfig::validate() const {
  if (dimension < 2) throw ValidationError("TrainConfig: dimension must be >= 2");
  if (window < 1) throw ValidationError("TrainConfig: window must be >= 1");
  if (epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
  if (min_count < 1) throw ValidationError("TrainConfig: min_count must be >= 1");
  if (ns_exponent < -1.0 || ns_exponent > 1.0) {
    throw ValidationError("TrainConfig: ns_exponent must be in [-1, 1]");
  }
  if (negatives_per_positive < 1) {
    throw ValidationError("TrainConfig: negatives_per_positive must be >= 1");
  }
  if (learning_rate <= 0.0) throw ValidationError("TrainConfig: learning_rate must be > 0");
  if (threads < 1) throw ValidationError("TrainConfig: threads must be >= 1");
}

NegativeSampler::NegativeSampler(const corpus::Vocabulary& vocab, double ns_exponent)
    : sampler_([&] {
        std::vector<double> weights;
        weights.reserve(vocab.size());
        for (int i = 0; i < vocab.size(); ++i) {
          weights.push_back(std::pow(static_cast<double>(vocab.count(i)), ns_exponent));
        }
        return weights;
      }()) {}

NegativeSampler build_negative_sampler(const corpus::Vocabulary& vocab, double ns_exponent) {
  return NegativeSampler(vocab, ns_exponent);
}

namespace {

/// Shared CBOW math: evaluates one instance and hands the row updates to a
/// sink. `apply` receives (table_id 0=U/1=V, row, coefficient, direction).
template <typename Sink>
double cbow_instance(const CbowInstance& inst, const MatRM& u, const MatRM& v, Vec& vbar,
                     Sink&& sink) {
  const auto d = u.cols();
  vbar.setZero(d);
  for (int c : inst.context) vbar += v.row(c);
  vbar /= static_cast<double>(inst.context.size());

  double objective = 0.0;
  Vec vbar_grad = Vec::Zero(d);

  const double s_pos = u.row(inst.center).dot(vbar);
  objective += log_sigmoid(s_pos);
  const double g_pos = 1.0 - sigmoid(s_pos);  // d/ds log sigma(s)
  sink(0, inst.center, g_pos, vbar);
  vbar_grad += g_pos * u.row(inst.center).transpose();

  for (int n : inst.negatives) {
    const double s_neg = u.row(n).dot(vbar);
    objective += log_sigmoid(-s_neg);
    const double g_neg = -sigmoid(s_neg);
    sink(0, n, g_neg, vbar);
    vbar_grad += g_neg * u.row(n).transpose();
  }

  const double scale = 1.0 / static_cast<double>(inst.context.size());
  for (int c : inst.context) sink(1, c, scale, vbar_grad);
  return objective;
}

}  // namespace

CbowValue loss_and_gradient(const std::vector<CbowInstance>& batch, const EmbeddingTable& table) {
  CbowValue out;
  Vec vbar(table.dimension());
  for (const auto& inst : batch) {
    if (inst.context.empty()) throw ValidationError("loss_and_gradient: empty context");
    out.objective += cbow_instance(
        inst, table.u, table.v, vbar, [&](int which, int row, double coeff, const Vec& dir) {
          auto& slot = which == 0 ? out.gradients.u[row] : out.gradients.v[row];
          if (slot.size() == 0) slot = Vec::Zero(table.dimension());
          slot += coeff * dir;
        });
  }
  return out;
}

namespace {

struct IndexedCorpus {
  std::vector<std::vector<int>> sessions;
  std::size_t positions = 0;
};

IndexedCorpus index_sessions(const std::vector<corpus::Session>& sessions,
                             const corpus::Vocabulary& vocab) {
  IndexedCorpus out;
  out.sessions.reserve(sessions.size());
  for (const auto& s : sessions) {
    std::vector<int> ids;
    ids.reserve(s.products.size());
    for (const auto& p : s.products) {
      if (auto id = vocab.id_of(p)) ids.push_back(*id);
    }
    if (ids.size() >= 2) {
      out.positions += ids.size();
      out.sessions.push_back(std::move(ids));
    }
  }
  return out;
}

class SgdWorker {
 public:
  SgdWorker(EmbeddingTable& table, const NegativeSampler& sampler, const TrainConfig& cfg,
            std::size_t total_updates, std::atomic<std::size_t>& progress)
      : table_(table), sampler_(sampler), cfg_(cfg), total_updates_(total_updates),
        progress_(progress) {}

  // Runs one epoch over the given session slice; returns (objective, instances).
  std::pair<double, std::size_t> run_epoch(const std::vector<std::vector<int>>& sessions,
                                           std::size_t begin, std::size_t end, Rng& rng) {
    double objective = 0.0;
    std::size_t instances = 0;
    Vec vbar(table_.dimension());
    CbowInstance inst;
    for (std::size_t si = begin; si < end; ++si) {
      const auto& ids = sessions[si];
      const int n = static_cast<int>(ids.size());
      for (int t = 0; t < n; ++t) {
        const std::size_t done = progress_.fetch_add(1, std::memory_order_relaxed);
        const double frac = total_updates_ == 0
                                ? 0.0
                                : static_cast<double>(done) / static_cast<double>(total_updates_);
        const double lr = std::max(cfg_.min_learning_rate,
                                   cfg_.learning_rate * (1.0 - frac));

        inst.center = ids[static_cast<std::size_t>(t)];
        inst.context.clear();
        for (int j = std::max(0, t - cfg_.window); j <= std::min(n - 1, t + cfg_.window); ++j) {
          if (j != t) inst.context.push_back(ids[static_cast<std::size_t>(j)]);
        }
        if (inst.context.empty()) continue;
        inst.negatives.clear();
        for (int k = 0; k < cfg_.negatives_per_positive; ++k) {
          int neg = inst.center;
          for (int tries = 0; tries < 16 && neg == inst.center; ++tries) {
            neg = sampler_.sample(rng);
          }
          if (neg != inst.center) inst.negatives.push_back(neg);
        }

        const double obj = cbow_instance(
            inst, table_.u, table_.v, vbar,
            [&](int which, int row, double coeff, const Vec& dir) {
              auto& m = which == 0 ? table_.u : table_.v;
              m.row(row) += lr * coeff * dir.transpose();
            });
        if (!std::isfinite(obj)) {
          throw TrainingError("embed::train: non-finite loss, learning rate likely too high");
        }
        objective += obj;
        ++instances;
      }
    }
    return {objective, instances};
  }

 private:
  EmbeddingTable& table_;
  const NegativeSampler& sampler_;
  const TrainConfig& cfg_;
  std::size_t total_updates_;
  std::atomic<std::size_t>& progress_;
};

}  // namespace

EmbeddingTable train(const std::vector<corpus::Session>& sessions, const TrainConfig& config,
                     TrainStats* stats) {
  config.validate();

  EmbeddingTable table;
  table.vocab = corpus::build_vocab(sessions, config.min_count);
  const int n = table.vocab.size();
  const int d = config.dimension;

  Rng rng(config.rng_seed);
  table.u = MatRM(n, d);
  const double bound = 0.5 / static_cast<double>(d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) table.u(i, j) = rng.uniform(-bound, bound);
  }
  table.v = MatRM::Zero(n, d);

  const auto corpus = index_sessions(sessions, table.vocab);
  if (corpus.sessions.empty()) {
    throw ValidationError("embed::train: no trainable session after vocabulary restriction");
  }

  const NegativeSampler sampler(table.vocab, config.ns_exponent);
  const std::size_t total_updates =
      corpus.positions * static_cast<std::size_t>(std::max(config.epochs, 1));
  std::atomic<std::size_t> progress{0};
  SgdWorker worker(table, sampler, config, total_updates, progress);

  if (stats) {
    stats->epoch_mean_loss.clear();
    stats->instances_per_epoch = 0;
  }

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double objective = 0.0;
    std::size_t instances = 0;
    if (config.threads == 1) {
      Rng epoch_rng(derive_seed(config.rng_seed, "epoch-" + std::to_string(epoch)));
      auto [obj, cnt] = worker.run_epoch(corpus.sessions, 0, corpus.sessions.size(), epoch_rng);
      objective = obj;
      instances = cnt;
    } else {
      const int t = std::min<int>(config.threads, static_cast<int>(corpus.sessions.size()));
      std::vector<std::thread> pool;
      std::vector<double> objs(static_cast<std::size_t>(t), 0.0);
      std::vector<std::size_t> cnts(static_cast<std::size_t>(t), 0);
      const std::size_t chunk = (corpus.sessions.size() + t - 1) / t;
      for (int w = 0; w < t; ++w) {
        pool.emplace_back([&, w] {
          Rng r(derive_seed(config.rng_seed,
                            "epoch-" + std::to_string(epoch) + "-w" + std::to_string(w)));
          const std::size_t b = static_cast<std::size_t>(w) * chunk;
          const std::size_t e = std::min(corpus.sessions.size(), b + chunk);
          auto [obj, cnt] = worker.run_epoch(corpus.sessions, b, e, r);
          objs[static_cast<std::size_t>(w)] = obj;
          cnts[static_cast<std::size_t>(w)] = cnt;
        });
      }
      for (auto& th : pool) th.join();
      for (int w = 0; w < t; ++w) {
        objective += objs[static_cast<std::size_t>(w)];
        instances += cnts[static_cast<std::size_t>(w)];
      }
    }
    if (stats && instances > 0) {
      stats->epoch_mean_loss.push_back(-objective / static_cast<double>(instances));
      stats->instances_per_epoch = instances;
    }
  }
  return table;
}

Vec session_vector(const std::vector<std::string>& products, const EmbeddingTable& table) {
  std::vector<int> ids;
  ids.reserve(products.size());
  for (const auto& p : products) {
    if (auto id = table.vocab.id_of(p)) ids.push_back(*id);
  }
  return session_vector_ids(ids, table);
}

Vec session_vector_ids(const std::vector<int>& ids, const EmbeddingTable& table) {
  if (ids.empty()) {
    throw ValidationError("session_vector: no in-vocabulary event (empty intent)");
  }
  Vec mean = Vec::Zero(table.dimension());
  for (int id : ids) mean += table.u.row(id);
  return mean / static_cast<double>(ids.size());
}

std::vector<Scored> nearest_neighbors(const Vec& query, const EmbeddingTable& table, int k) {
  if (k < 1) throw ValidationError("nearest_neighbors: k must be >= 1");
  const double qnorm = query.norm();
  if (qnorm == 0.0 || !query.allFinite()) {
    throw ValidationError("nearest_neighbors: query must be finite and nonzero");
  }
  std::vector<Scored> scored;
  scored.reserve(static_cast<std::size_t>(table.size()));
  for (int i = 0; i < table.size(); ++i) {
    const double rnorm = table.u.row(i).norm();
    const double sim = rnorm == 0.0 ? 0.0 : table.u.row(i).dot(query) / (rnorm * qnorm);
    scored.push_back({i, sim});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

}  // namespace shopalign::embed
