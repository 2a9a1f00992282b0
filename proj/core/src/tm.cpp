#include "shopalign/tm.hpp"

#include <algorithm>
#include <cmath>

namespace shopalign::align {

TmGradients::TmGradients(const TranslationModel& m)
    : src_embed(Mat::Zero(m.src_embed.rows(), m.src_embed.cols())),
      tgt_embed(Mat::Zero(m.tgt_embed.rows(), m.tgt_embed.cols())),
      encoder(m.encoder), decoder(m.decoder),
      w_out(Mat::Zero(m.w_out.rows(), m.w_out.cols())), b_out(Vec::Zero(m.b_out.size())) {}

void TmGradients::set_zero() {
  src_embed.setZero();
  tgt_embed.setZero();
  encoder.scale(0.0);
  decoder.scale(0.0);
  w_out.setZero();
  b_out.setZero();
}

double TmGradients::squared_norm() const {
  return src_embed.squaredNorm() + tgt_embed.squaredNorm() + encoder.squared_norm() +
         decoder.squared_norm() + w_out.squaredNorm() + b_out.squaredNorm();
}

void TmGradients::scale(double s) {
  src_embed *= s;
  tgt_embed *= s;
  encoder.scale(s);
  decoder.scale(s);
  w_out *= s;
  b_out *= s;
}

namespace {

struct PairForward {
  std::vector<rnn::GruStep> enc_steps;
  std::vector<rnn::GruStep> dec_steps;
  std::vector<Vec> logits;
  double mean_loss = 0.0;
};

PairForward forward_pair(const TranslationModel& m, const std::vector<int>& src_ids,
                         const std::vector<int>& tgt_ids, bool keep_caches) {
  if (src_ids.empty() || tgt_ids.empty()) {
    throw ValidationError("tm: source and target sequences must be nonempty");
  }
  PairForward f;
  Vec h = Vec::Zero(m.encoder.hidden());
  for (int s : src_ids) {
    rnn::GruStep step;
    h = rnn::gru_forward(m.encoder, m.src_embed.row(s).transpose(), h,
                         keep_caches ? &step : nullptr);
    if (keep_caches) f.enc_steps.push_back(std::move(step));
  }

  double loss = 0.0;
  Vec hd = h;
  int input_row = m.bos_row();
  for (std::size_t t = 0; t < tgt_ids.size(); ++t) {
    rnn::GruStep step;
    hd = rnn::gru_forward(m.decoder, m.tgt_embed.row(input_row).transpose(), hd,
                          keep_caches ? &step : nullptr);
    Vec logits = m.w_out * hd + m.b_out;
    loss += rnn::softmax_cross_entropy(logits, tgt_ids[t]);
    if (keep_caches) {
      f.dec_steps.push_back(std::move(step));
      f.logits.push_back(std::move(logits));
    }
    input_row = tgt_ids[t];  // teacher forcing
  }
  f.mean_loss = loss / static_cast<double>(tgt_ids.size());
  return f;
}

}  // namespace

double tm_pair_loss(const TranslationModel& model, const std::vector<int>& src_ids,
                    const std::vector<int>& tgt_ids) {
  return forward_pair(model, src_ids, tgt_ids, false).mean_loss;
}

double tm_pair_backward(const TranslationModel& model, const std::vector<int>& src_ids,
                        const std::vector<int>& tgt_ids, TmGradients& grads) {
  PairForward f = forward_pair(model, src_ids, tgt_ids, true);
  const double inv_steps = 1.0 / static_cast<double>(tgt_ids.size());

  Vec dh = Vec::Zero(model.decoder.hidden());
  for (int t = static_cast<int>(tgt_ids.size()) - 1; t >= 0; --t) {
    Vec dlogits;
    rnn::softmax_cross_entropy(f.logits[static_cast<std::size_t>(t)], tgt_ids[static_cast<std::size_t>(t)],
                               &dlogits);
    dlogits *= inv_steps;
    const Vec& h_t = f.dec_steps[static_cast<std::size_t>(t)].h;
    grads.w_out += dlogits * h_t.transpose();
    grads.b_out += dlogits;
    dh += model.w_out.transpose() * dlogits;

    auto back = rnn::gru_backward(model.decoder, f.dec_steps[static_cast<std::size_t>(t)], dh,
                                  grads.decoder);
    const int input_row = t == 0 ? model.bos_row() : tgt_ids[static_cast<std::size_t>(t - 1)];
    grads.tgt_embed.row(input_row) += back.dx.transpose();
    dh = std::move(back.dh_prev);
  }

  // dh now carries the loss sensitivity of the encoder's final state.
  for (int s = static_cast<int>(src_ids.size()) - 1; s >= 0; --s) {
    auto back = rnn::gru_backward(model.encoder, f.enc_steps[static_cast<std::size_t>(s)], dh,
                                  grads.encoder);
    grads.src_embed.row(src_ids[static_cast<std::size_t>(s)]) += back.dx.transpose();
    dh = std::move(back.dh_prev);
  }
  return f.mean_loss;
}

namespace {

struct IndexedPairs {
  std::vector<std::vector<int>> src, tgt;
};

IndexedPairs index_pairs(const std::vector<corpus::CrossSession>& cross_sessions,
                         const embed::EmbeddingTable& source,
                         const embed::EmbeddingTable& target) {
  IndexedPairs out;
  for (const auto& cs : cross_sessions) {
    std::vector<int> s, t;
    for (const auto& p : cs.source.products) {
      if (auto id = source.vocab.id_of(p)) s.push_back(*id);
    }
    for (const auto& p : cs.target.products) {
      if (auto id = target.vocab.id_of(p)) t.push_back(*id);
    }
    if (!s.empty() && !t.empty()) {
      out.src.push_back(std::move(s));
      out.tgt.push_back(std::move(t));
    }
  }
  return out;
}

void apply_update(TranslationModel& m, const TmGradients& g, double lr) {
  m.src_embed -= lr * g.src_embed;
  m.tgt_embed -= lr * g.tgt_embed;
  rnn::sgd_update(m.encoder, g.encoder, lr);
  rnn::sgd_update(m.decoder, g.decoder, lr);
  m.w_out -= lr * g.w_out;
  m.b_out -= lr * g.b_out;
}

}  // namespace

TranslationModel tm_train(const std::vector<corpus::CrossSession>& cross_sessions,
                          const embed::EmbeddingTable& source,
                          const embed::EmbeddingTable& target, const TmConfig& config,
                          TmTrainStats* stats) {
  if (cross_sessions.empty()) throw ValidationError("tm_train: no cross-shop session pairs");
  if (config.hidden < 1) throw ValidationError("tm_train: hidden size must be >= 1");

  TranslationModel m;
  m.config = config;
  m.source_vocab = source.vocab;
  m.target_vocab = target.vocab;
  m.src_embed = source.u;
  m.tgt_embed = Mat::Zero(target.size() + 1, target.dimension());
  m.tgt_embed.topRows(target.size()) = target.u;

  Rng rng(config.rng_seed);
  m.encoder.init(source.dimension(), config.hidden, rng);
  m.decoder.init(target.dimension(), config.hidden, rng);
  m.w_out = Mat::Zero(target.size(), config.hidden);
  for (int i = 0; i < m.w_out.rows(); ++i) {
    for (int j = 0; j < m.w_out.cols(); ++j) m.w_out(i, j) = rng.uniform(-0.01, 0.01);
  }
  m.b_out = Vec::Zero(target.size());

  const IndexedPairs pairs = index_pairs(cross_sessions, source, target);
  if (pairs.src.empty()) {
    throw ValidationError("tm_train: no pair survives vocabulary restriction");
  }
  if (stats) {
    stats->epoch_mean_loss.clear();
    stats->pairs_used = pairs.src.size();
  }

  TmGradients grads(m);
  std::vector<std::size_t> order(pairs.src.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t total_updates =
      pairs.src.size() * static_cast<std::size_t>(std::max(config.epochs, 1));
  std::size_t done = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_loss = 0.0;
    for (std::size_t i : order) {
      const double frac = static_cast<double>(done++) / static_cast<double>(total_updates);
      const double lr =
          std::max(config.min_learning_rate, config.learning_rate * (1.0 - frac));
      grads.set_zero();
      const double loss = tm_pair_backward(m, pairs.src[i], pairs.tgt[i], grads);
      if (!std::isfinite(loss)) {
        throw TrainingError("tm_train: non-finite loss");
      }
      epoch_loss += loss;
      const double norm = std::sqrt(grads.squared_norm());
      if (config.clip_norm > 0 && norm > config.clip_norm) {
        grads.scale(config.clip_norm / norm);
      }
      apply_update(m, grads, lr);
    }
    if (stats) stats->epoch_mean_loss.push_back(epoch_loss / pairs.src.size());
  }
  return m;
}

TmPrediction tm_predict_ids(const TranslationModel& model, const std::vector<int>& src_ids,
                            int top_k) {
  if (src_ids.empty()) {
    throw ValidationError("tm_predict: no in-vocabulary source event (empty intent)");
  }
  if (top_k < 1) throw ValidationError("tm_predict: top_k must be >= 1");

  Vec h = Vec::Zero(model.encoder.hidden());
  for (int s : src_ids) {
    h = rnn::gru_forward(model.encoder, model.src_embed.row(s).transpose(), h);
  }

  const int n = model.target_vocab.size();
  Vec max_prob = Vec::Zero(n);
  Vec first_probs;
  Vec hd = h;
  int input_row = model.bos_row();
  for (int t = 0; t < model.config.max_decode_steps; ++t) {
    hd = rnn::gru_forward(model.decoder, model.tgt_embed.row(input_row).transpose(), hd);
    const Vec probs = rnn::softmax(model.w_out * hd + model.b_out);
    if (t == 0) first_probs = probs;
    max_prob = max_prob.cwiseMax(probs);
    int arg = 0;
    probs.maxCoeff(&arg);
    input_row = arg;
  }

  const auto ranked = [n, top_k](const Vec& scores) {
    std::vector<embed::Scored> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back({i, scores(i)});
    std::sort(out.begin(), out.end(), [](const embed::Scored& a, const embed::Scored& b) {
      if (a.similarity != b.similarity) return a.similarity > b.similarity;
      return a.id < b.id;
    });
    if (static_cast<int>(out.size()) > top_k) out.resize(static_cast<std::size_t>(top_k));
    return out;
  };

  TmPrediction pred;
  pred.fip = ranked(first_probs);
  pred.aip = ranked(max_prob);
  return pred;
}

TmPrediction tm_predict(const TranslationModel& model, const corpus::Session& source,
                        int top_k) {
  std::vector<int> ids;
  for (const auto& p : source.products) {
    if (auto id = model.source_vocab.id_of(p)) ids.push_back(*id);
  }
  return tm_predict_ids(model, ids, top_k);
}

std::vector<int> tm_greedy_decode(const TranslationModel& model, const std::vector<int>& src_ids,
                                  int steps) {
  if (src_ids.empty()) throw ValidationError("tm_greedy_decode: empty source");
  Vec h = Vec::Zero(model.encoder.hidden());
  for (int s : src_ids) {
    h = rnn::gru_forward(model.encoder, model.src_embed.row(s).transpose(), h);
  }
  std::vector<int> out;
  Vec hd = h;
  int input_row = model.bos_row();
  for (int t = 0; t < steps; ++t) {
    hd = rnn::gru_forward(model.decoder, model.tgt_embed.row(input_row).transpose(), hd);
    const Vec logits = model.w_out * hd + model.b_out;
    int arg = 0;
    logits.maxCoeff(&arg);
    out.push_back(arg);
    input_row = arg;
  }
  return out;
}

}  // namespace shopalign::align
