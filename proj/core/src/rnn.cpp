#include "shopalign/rnn.hpp"

#include <cmath>

namespace shopalign::rnn {

namespace {

Mat uniform_matrix(int rows, int cols, Rng& rng, double scale) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
  }
  return m;
}

inline Vec sigmoid_vec(const Vec& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

void GruParams::init(int input, int hidden, Rng& rng, double scale) {
  wz = uniform_matrix(hidden, input, rng, scale);
  uz = uniform_matrix(hidden, hidden, rng, scale);
  wr = uniform_matrix(hidden, input, rng, scale);
  ur = uniform_matrix(hidden, hidden, rng, scale);
  wh = uniform_matrix(hidden, input, rng, scale);
  uh = uniform_matrix(hidden, hidden, rng, scale);
  bz = Vec::Zero(hidden);
  br = Vec::Zero(hidden);
  bh = Vec::Zero(hidden);
}

GruGrads::GruGrads(const GruParams& p)
    : wz(Mat::Zero(p.wz.rows(), p.wz.cols())), uz(Mat::Zero(p.uz.rows(), p.uz.cols())),
      wr(Mat::Zero(p.wr.rows(), p.wr.cols())), ur(Mat::Zero(p.ur.rows(), p.ur.cols())),
      wh(Mat::Zero(p.wh.rows(), p.wh.cols())), uh(Mat::Zero(p.uh.rows(), p.uh.cols())),
      bz(Vec::Zero(p.bz.size())), br(Vec::Zero(p.br.size())), bh(Vec::Zero(p.bh.size())) {}

double GruGrads::squared_norm() const {
  return wz.squaredNorm() + uz.squaredNorm() + wr.squaredNorm() + ur.squaredNorm() +
         wh.squaredNorm() + uh.squaredNorm() + bz.squaredNorm() + br.squaredNorm() +
         bh.squaredNorm();
}

void GruGrads::scale(double s) {
  wz *= s; uz *= s; wr *= s; ur *= s; wh *= s; uh *= s;
  bz *= s; br *= s; bh *= s;
}

Vec gru_forward(const GruParams& p, const Vec& x, const Vec& h_prev, GruStep* cache) {
  const Vec z = sigmoid_vec(p.wz * x + p.uz * h_prev + p.bz);
  const Vec r = sigmoid_vec(p.wr * x + p.ur * h_prev + p.br);
  const Vec c = (p.wh * x + p.uh * r.cwiseProduct(h_prev) + p.bh)
                    .unaryExpr([](double v) { return std::tanh(v); });
  Vec h = z.cwiseProduct(h_prev) + (Vec::Ones(z.size()) - z).cwiseProduct(c);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->z = z;
    cache->r = r;
    cache->c = c;
    cache->h = h;
  }
  return h;
}

GruBackResult gru_backward(const GruParams& p, const GruStep& s, const Vec& dh, GruGrads& g) {
  const Vec ones = Vec::Ones(dh.size());

  const Vec dz = dh.cwiseProduct(s.h_prev - s.c);
  const Vec dc = dh.cwiseProduct(ones - s.z);
  Vec dh_prev = dh.cwiseProduct(s.z);

  const Vec dc_pre = dc.cwiseProduct(ones - s.c.cwiseProduct(s.c));
  g.wh += dc_pre * s.x.transpose();
  g.uh += dc_pre * s.r.cwiseProduct(s.h_prev).transpose();
  g.bh += dc_pre;
  const Vec d_rh = p.uh.transpose() * dc_pre;
  const Vec dr = d_rh.cwiseProduct(s.h_prev);
  dh_prev += d_rh.cwiseProduct(s.r);

  const Vec dz_pre = dz.cwiseProduct(s.z).cwiseProduct(ones - s.z);
  const Vec dr_pre = dr.cwiseProduct(s.r).cwiseProduct(ones - s.r);
  g.wz += dz_pre * s.x.transpose();
  g.uz += dz_pre * s.h_prev.transpose();
  g.bz += dz_pre;
  g.wr += dr_pre * s.x.transpose();
  g.ur += dr_pre * s.h_prev.transpose();
  g.br += dr_pre;
  dh_prev += p.uz.transpose() * dz_pre + p.ur.transpose() * dr_pre;

  GruBackResult out;
  out.dx = p.wz.transpose() * dz_pre + p.wr.transpose() * dr_pre + p.wh.transpose() * dc_pre;
  out.dh_prev = std::move(dh_prev);
  return out;
}

void sgd_update(GruParams& p, const GruGrads& g, double lr) {
  p.wz -= lr * g.wz; p.uz -= lr * g.uz;
  p.wr -= lr * g.wr; p.ur -= lr * g.ur;
  p.wh -= lr * g.wh; p.uh -= lr * g.uh;
  p.bz -= lr * g.bz; p.br -= lr * g.br; p.bh -= lr * g.bh;
}

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

double softmax_cross_entropy(const Vec& logits, int label, Vec* dlogits) {
  const Vec probs = softmax(logits);
  const double p = std::max(probs(label), 1e-300);
  if (dlogits) {
    *dlogits = probs;
    (*dlogits)(label) -= 1.0;
  }
  return -std::log(p);
}

}  // namespace shopalign::rnn
