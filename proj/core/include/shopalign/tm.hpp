#pragma once

#include <cstdint>
#include <vector>

#include "shopalign/corpus.hpp"
#include "shopalign/embed.hpp"
#include "shopalign/rnn.hpp"

namespace shopalign::align {

struct TmConfig {
  int hidden = 64;
  int epochs = 10;
  double learning_rate = 0.05;
  double min_learning_rate = 1e-3;
  double clip_norm = 5.0;
  int max_decode_steps = 5;
  std::uint64_t rng_seed = 1;
};

/// Sequence translation model: a recurrent encoder over source-shop product
/// sequences and a recurrent decoder emitting target-shop products.
/// Embedding layers start from the trained product embeddings.
struct TranslationModel {
  corpus::Vocabulary source_vocab;
  corpus::Vocabulary target_vocab;
  Mat src_embed;  // |Vs| x d_s
  Mat tgt_embed;  // (|Vt| + 1) x d_t, the extra row is the begin-of-sequence input
  rnn::GruParams encoder;
  rnn::GruParams decoder;
  Mat w_out;  // |Vt| x hidden
  Vec b_out;
  TmConfig config;

  int bos_row() const { return target_vocab.size(); }
};

struct TmGradients {
  Mat src_embed, tgt_embed;
  rnn::GruGrads encoder, decoder;
  Mat w_out;
  Vec b_out;

  explicit TmGradients(const TranslationModel& m);
  void set_zero();
  double squared_norm() const;
  void scale(double s);
};

/// Mean per-step teacher-forced cross-entropy for one pair.
double tm_pair_loss(const TranslationModel& model, const std::vector<int>& src_ids,
                    const std::vector<int>& tgt_ids);

/// Same, accumulating analytic gradients of the mean loss.
double tm_pair_backward(const TranslationModel& model, const std::vector<int>& src_ids,
                        const std::vector<int>& tgt_ids, TmGradients& grads);

struct TmTrainStats {
  std::vector<double> epoch_mean_loss;
  std::size_t pairs_used = 0;
};

TranslationModel tm_train(const std::vector<corpus::CrossSession>& cross_sessions,
                          const embed::EmbeddingTable& source,
                          const embed::EmbeddingTable& target, const TmConfig& config,
                          TmTrainStats* stats = nullptr);

struct TmPrediction {
  std::vector<embed::Scored> fip;  // first decode step, ranked by probability
  std::vector<embed::Scored> aip;  // max probability per product over all steps
};

/// Greedy decoding. FIP ranks the first step's softmax; AIP ranks the union
/// of the first max_decode_steps steps by max per-product probability.
TmPrediction tm_predict(const TranslationModel& model, const corpus::Session& source, int top_k);
TmPrediction tm_predict_ids(const TranslationModel& model, const std::vector<int>& src_ids,
                            int top_k);

/// Argmax decode of `steps` target products; used by the memorization checks.
std::vector<int> tm_greedy_decode(const TranslationModel& model, const std::vector<int>& src_ids,
                                  int steps);

}  // namespace shopalign::align
