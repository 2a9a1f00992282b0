#pragma once

#include "shopalign/linalg.hpp"

namespace shopalign::rnn {

/// Single gated recurrent cell (GRU-style), hand-rolled so gradients stay
/// inspectable and finite-difference checkable.
struct GruParams {
  Mat wz, uz, wr, ur, wh, uh;  // w*: hidden x input, u*: hidden x hidden
  Vec bz, br, bh;

  void init(int input, int hidden, Rng& rng, double scale = 0.08);
  int hidden() const { return static_cast<int>(wz.rows()); }
  int input() const { return static_cast<int>(wz.cols()); }
};

/// Gradient accumulator with the same shapes as GruParams.
struct GruGrads {
  Mat wz, uz, wr, ur, wh, uh;
  Vec bz, br, bh;

  explicit GruGrads(const GruParams& p);
  double squared_norm() const;
  void scale(double s);
};

/// Per-step cache needed by the backward pass.
struct GruStep {
  Vec x, h_prev, z, r, c, h;
};

/// h = z .* h_prev + (1 - z) .* tanh(Wh x + Uh (r .* h_prev) + bh)
Vec gru_forward(const GruParams& p, const Vec& x, const Vec& h_prev, GruStep* cache = nullptr);

struct GruBackResult {
  Vec dx, dh_prev;
};

/// Backpropagates dh through one step, accumulating parameter gradients.
GruBackResult gru_backward(const GruParams& p, const GruStep& step, const Vec& dh, GruGrads& g);

/// Applies one SGD step: p -= lr * g.
void sgd_update(GruParams& p, const GruGrads& g, double lr);

/// Numerically stable softmax.
Vec softmax(const Vec& logits);

/// Cross-entropy of the label under softmax(logits); dlogits gets
/// probs - onehot(label) when non-null.
double softmax_cross_entropy(const Vec& logits, int label, Vec* dlogits = nullptr);

}  // namespace shopalign::rnn
