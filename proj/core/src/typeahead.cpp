#include "shopalign/typeahead.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace shopalign::typeahead {

Charset::Charset(const std::vector<QueryItem>& items) {
  std::set<char> seen;
  for (const auto& item : items) {
    if (item.query.empty()) throw ValidationError("Charset: queries must be nonempty");
    for (char c : item.query) seen.insert(c);
  }
  chars_.assign(seen.begin(), seen.end());
}

std::optional<int> Charset::index_of(char c) const {
  const auto pos = chars_.find(c);
  if (pos == std::string::npos) return std::nullopt;
  return static_cast<int>(pos);
}

LmGradients::LmGradients(const CondLM& m)
    : char_embed(Mat::Zero(m.char_embed.rows(), m.char_embed.cols())),
      intent_proj(Mat::Zero(m.intent_proj.rows(), m.intent_proj.cols())),
      intent_bias(Vec::Zero(m.intent_bias.size())), cell(m.cell),
      w_out(Mat::Zero(m.w_out.rows(), m.w_out.cols())), b_out(Vec::Zero(m.b_out.size())) {}

void LmGradients::set_zero() {
  char_embed.setZero();
  intent_proj.setZero();
  intent_bias.setZero();
  cell.scale(0.0);
  w_out.setZero();
  b_out.setZero();
}

double LmGradients::squared_norm() const {
  return char_embed.squaredNorm() + intent_proj.squaredNorm() + intent_bias.squaredNorm() +
         cell.squared_norm() + w_out.squaredNorm() + b_out.squaredNorm();
}

void LmGradients::scale(double s) {
  char_embed *= s;
  intent_proj *= s;
  intent_bias *= s;
  cell.scale(s);
  w_out *= s;
  b_out *= s;
}

namespace {

// The terminator row of char_embed doubles as the begin-of-sequence input;
// the terminator is never consumed mid-sequence so the rows cannot clash.
struct LmForward {
  Vec h0, h0_pre;
  std::vector<rnn::GruStep> steps;
  std::vector<Vec> logits;
  std::vector<int> inputs;   // embedding rows consumed per step
  std::vector<int> labels;   // predicted char (or terminator) per step
  double mean_loss = 0.0;
};

std::vector<int> encode(const CondLM& m, const std::string& query) {
  std::vector<int> ids;
  ids.reserve(query.size());
  for (char c : query) {
    const auto idx = m.charset.index_of(c);
    ids.push_back(idx ? *idx : -1);
  }
  return ids;
}

// Intent vectors are length-normalized before projection: conditioning reads
// the direction of the intent, and mapped intents arrive at shop-specific
// scales.
Vec normalized_intent(const Vec& intent) {
  const double n = intent.norm();
  return n > 0 ? Vec(intent / n) : intent;
}

LmForward lm_forward(const CondLM& m, const std::string& query, const Vec& raw_intent,
                     bool keep_caches) {
  if (query.empty()) throw ValidationError("lm: query must be nonempty");
  const Vec intent = normalized_intent(raw_intent);
  LmForward f;
  f.h0_pre = m.intent_proj * intent + m.intent_bias;
  f.h0 = f.h0_pre.unaryExpr([](double v) { return std::tanh(v); });

  const std::vector<int> ids = encode(m, query);
  f.inputs.push_back(m.charset.terminator());
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) f.inputs.push_back(ids[i]);
  f.labels = ids;
  f.labels.push_back(m.charset.terminator());
  f.inputs.push_back(ids.back());

  double loss = 0.0;
  Vec h = f.h0;
  for (std::size_t t = 0; t < f.labels.size(); ++t) {
    if (f.inputs[t] < 0 || f.labels[t] < 0) {
      // Character outside the inventory: effectively impossible.
      loss += 690.0;  // -log(1e-300)
      continue;
    }
    rnn::GruStep step;
    h = rnn::gru_forward(m.cell, m.char_embed.row(f.inputs[t]).transpose(), h,
                         keep_caches ? &step : nullptr);
    Vec logits = m.w_out * h + m.b_out;
    loss += rnn::softmax_cross_entropy(logits, f.labels[t]);
    if (keep_caches) {
      f.steps.push_back(std::move(step));
      f.logits.push_back(std::move(logits));
    }
  }
  f.mean_loss = loss / static_cast<double>(f.labels.size());
  return f;
}

}  // namespace

double lm_query_loss(const CondLM& model, const std::string& query, const Vec& intent) {
  return lm_forward(model, query, intent, false).mean_loss;
}

double lm_query_backward(const CondLM& model, const std::string& query, const Vec& raw_intent,
                         LmGradients& grads) {
  const Vec intent = normalized_intent(raw_intent);
  LmForward f = lm_forward(model, query, intent, true);
  if (f.steps.size() != f.labels.size()) {
    // Out-of-inventory characters have no differentiable path.
    return f.mean_loss;
  }
  const double inv = 1.0 / static_cast<double>(f.labels.size());

  Vec dh = Vec::Zero(model.cell.hidden());
  for (int t = static_cast<int>(f.labels.size()) - 1; t >= 0; --t) {
    Vec dlogits;
    rnn::softmax_cross_entropy(f.logits[static_cast<std::size_t>(t)],
                               f.labels[static_cast<std::size_t>(t)], &dlogits);
    dlogits *= inv;
    grads.w_out += dlogits * f.steps[static_cast<std::size_t>(t)].h.transpose();
    grads.b_out += dlogits;
    dh += model.w_out.transpose() * dlogits;

    auto back = rnn::gru_backward(model.cell, f.steps[static_cast<std::size_t>(t)], dh, grads.cell);
    grads.char_embed.row(f.inputs[static_cast<std::size_t>(t)]) += back.dx.transpose();
    dh = std::move(back.dh_prev);
  }
  // dh is now the sensitivity of h0 = tanh(intent_proj * intent + intent_bias).
  const Vec dpre = dh.cwiseProduct(
      (Vec::Ones(f.h0.size()) - f.h0.cwiseProduct(f.h0)));
  grads.intent_proj += dpre * intent.transpose();
  grads.intent_bias += dpre;
  return f.mean_loss;
}

CondLM lm_train(const std::vector<QueryItem>& corpus,
                const std::vector<std::optional<Vec>>& intents, int intent_dim,
                const LmConfig& config, LmTrainStats* stats) {
  if (corpus.empty()) throw ValidationError("lm_train: empty query corpus");
  if (intents.size() != corpus.size()) {
    throw ValidationError("lm_train: one intent slot per query required");
  }
  if (intent_dim < 1) throw ValidationError("lm_train: intent_dim must be >= 1");

  CondLM m;
  m.config = config;
  m.charset = Charset(corpus);
  m.intent_dim = intent_dim;

  Rng rng(config.rng_seed);
  const int vocab = m.charset.vocab_size();
  m.char_embed = Mat(vocab, config.char_dim);
  for (int i = 0; i < vocab; ++i) {
    for (int j = 0; j < config.char_dim; ++j) m.char_embed(i, j) = rng.uniform(-0.08, 0.08);
  }
  m.intent_proj = Mat(config.hidden, intent_dim);
  for (int i = 0; i < config.hidden; ++i) {
    for (int j = 0; j < intent_dim; ++j) m.intent_proj(i, j) = rng.uniform(-0.08, 0.08);
  }
  m.intent_bias = Vec::Zero(config.hidden);
  m.cell.init(config.char_dim, config.hidden, rng);
  m.w_out = Mat(vocab, config.hidden);
  for (int i = 0; i < vocab; ++i) {
    for (int j = 0; j < config.hidden; ++j) m.w_out(i, j) = rng.uniform(-0.08, 0.08);
  }
  m.b_out = Vec::Zero(vocab);

  const Vec zero_intent = Vec::Zero(intent_dim);
  LmGradients grads(m);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t total =
      corpus.size() * static_cast<std::size_t>(std::max(config.epochs, 1));
  std::size_t done = 0;
  if (stats) {
    stats->epoch_mean_loss.clear();
    stats->queries_used = corpus.size();
  }
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    for (std::size_t i : order) {
      const double frac = static_cast<double>(done++) / static_cast<double>(total);
      const double lr = std::max(config.min_learning_rate, config.learning_rate * (1.0 - frac));
      const Vec& intent = intents[i] ? *intents[i] : zero_intent;
      grads.set_zero();
      const double loss = lm_query_backward(m, corpus[i].query, intent, grads);
      if (!std::isfinite(loss)) throw TrainingError("lm_train: non-finite loss");
      epoch_loss += loss;
      const double norm = std::sqrt(grads.squared_norm());
      if (config.clip_norm > 0 && norm > config.clip_norm) {
        grads.scale(config.clip_norm / norm);
      }
      m.char_embed -= lr * grads.char_embed;
      m.intent_proj -= lr * grads.intent_proj;
      m.intent_bias -= lr * grads.intent_bias;
      rnn::sgd_update(m.cell, grads.cell, lr);
      m.w_out -= lr * grads.w_out;
      m.b_out -= lr * grads.b_out;
    }
    if (stats) stats->epoch_mean_loss.push_back(epoch_loss / corpus.size());
  }
  return m;
}

std::string lm_greedy_complete(const CondLM& model, const std::optional<Vec>& intent,
                               const std::string& prefix, int max_len) {
  const Vec zero = Vec::Zero(model.intent_dim);
  const Vec iv = intent ? normalized_intent(*intent) : zero;
  Vec h = (model.intent_proj * iv + model.intent_bias)
              .unaryExpr([](double v) { return std::tanh(v); });

  std::string text = prefix;
  int input_row = model.charset.terminator();  // begin-of-sequence
  // Consume the prefix first.
  for (char c : prefix) {
    const auto idx = model.charset.index_of(c);
    if (!idx) throw ValidationError("lm_greedy_complete: prefix character outside inventory");
    h = rnn::gru_forward(model.cell, model.char_embed.row(input_row).transpose(), h);
    input_row = *idx;
  }
  for (int step = 0; step < max_len; ++step) {
    h = rnn::gru_forward(model.cell, model.char_embed.row(input_row).transpose(), h);
    const Vec logits = model.w_out * h + model.b_out;
    int arg = 0;
    logits.maxCoeff(&arg);
    if (arg == model.charset.terminator()) break;
    text.push_back(model.charset.at(arg));
    input_row = arg;
  }
  return text;
}

std::vector<ScoredCompletion> score_completions(const CondLM& model,
                                                const std::optional<Vec>& intent,
                                                const std::string& prefix,
                                                const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw ValidationError("score_completions: no candidates");
  for (const auto& c : candidates) {
    if (c.size() < prefix.size() || c.compare(0, prefix.size(), prefix) != 0) {
      throw ValidationError("score_completions: candidate '" + c +
                            "' does not extend prefix '" + prefix + "'");
    }
  }
  const Vec zero = Vec::Zero(model.intent_dim);
  const Vec& iv = intent ? *intent : zero;

  std::vector<ScoredCompletion> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    // Sum (not mean) of per-character log-probabilities incl. terminator.
    const double mean_loss = lm_query_loss(model, c, iv);
    const double total = -mean_loss * static_cast<double>(c.size() + 1);
    out.push_back({c, total});
  }
  std::sort(out.begin(), out.end(), [](const ScoredCompletion& a, const ScoredCompletion& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.text < b.text;
  });
  return out;
}

CandidatePool popularity_pool(const std::vector<QueryItem>& training, int top_m) {
  if (training.empty()) throw ValidationError("popularity_pool: empty training corpus");
  std::map<std::string, int> counts;
  for (const auto& item : training) ++counts[item.query];
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  CandidatePool pool;
  for (const auto& [q, c] : ranked) {
    if (static_cast<int>(pool.queries.size()) >= top_m) break;
    pool.queries.push_back(q);
  }
  return pool;
}

TypeaheadReport typeahead_eval(const CondLM* model, const CandidatePool& pool,
                               const std::vector<TypeaheadItem>& items, int seed_length,
                               int k) {
  if (seed_length < 0) throw ValidationError("typeahead_eval: seed length must be >= 0");
  TypeaheadReport report;
  std::vector<eval::RankedPrediction> predictions;
  for (const auto& item : items) {
    if (item.ground_truth.empty() ||
        static_cast<int>(item.ground_truth.size()) < seed_length) {
      ++report.skipped;
      continue;
    }
    if (model != nullptr && !item.intent.has_value()) {
      ++report.skipped;
      continue;
    }
    const std::string prefix = item.ground_truth.substr(0, static_cast<std::size_t>(seed_length));

    std::vector<std::string> candidates;
    for (const auto& q : pool.queries) {
      if (q.size() >= prefix.size() && q.compare(0, prefix.size(), prefix) == 0) {
        candidates.push_back(q);
      }
    }
    if (std::find(candidates.begin(), candidates.end(), item.ground_truth) == candidates.end()) {
      candidates.push_back(item.ground_truth);
    }

    std::vector<std::string> ranked;
    if (model) {
      auto scored = score_completions(*model, item.intent, prefix, candidates);
      for (auto& s : scored) ranked.push_back(std::move(s.text));
    } else {
      ranked = candidates;  // pool is already in popularity order
    }

    eval::RankedPrediction pred;
    int truth_index = -1;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      pred.ranking.push_back(static_cast<int>(i));
      if (ranked[i] == item.ground_truth) truth_index = static_cast<int>(i);
    }
    pred.relevant.insert(truth_index);
    predictions.push_back(std::move(pred));
    ++report.evaluated;
  }
  if (!predictions.empty()) report.mrr = eval::mrr_at_k(predictions, k);
  return report;
}

}  // namespace shopalign::typeahead
