#pragma once

// Straight-line reference implementations used as test oracles. Written
// directly from the defining formulas with plain loops over std::vector, sharing
// no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Single-output 7x7 convolution with zero padding 3 over `cin` planes of h x w.
inline Vec conv7(const Vec& in, std::size_t cin, std::size_t h, std::size_t w, const Vec& weight, double bias) {
  Vec out(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = bias;
      for (std::size_t c = 0; c < cin; ++c)
        for (int dy = -3; dy <= 3; ++dy)
          for (int dx = -3; dx <= 3; ++dx) {
            const long yy = long(y) + dy, xx = long(x) + dx;
            if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(w)) continue;
            acc += weight[(c * 7 + std::size_t(dy + 3)) * 7 + std::size_t(dx + 3)] * in[(c * h + std::size_t(yy)) * w + std::size_t(xx)];
          }
      out[y * w + x] = acc;
    }
  return out;
}

struct AvamWeights {
  Vec w_avg, w_max, w_out;  // each 1 x 2 x 7 x 7
  double b_avg = 0, b_max = 0, b_out = 0;
};

// Attention map for one sample: fv is c1 x h x w, fa is c2 x h x w.
inline Vec avam_map(const Vec& fv, std::size_t c1, const Vec& fa, std::size_t c2, std::size_t h, std::size_t w, const AvamWeights& p) {
  Vec f_avg(2 * h * w), f_max(2 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    double sv = 0, mv = fv[i], sa = 0, ma = fa[i];
    for (std::size_t c = 0; c < c1; ++c) {
      sv += fv[c * h * w + i];
      mv = std::max(mv, fv[c * h * w + i]);
    }
    for (std::size_t c = 0; c < c2; ++c) {
      sa += fa[c * h * w + i];
      ma = std::max(ma, fa[c * h * w + i]);
    }
    f_avg[i] = sv / double(c1);
    f_avg[h * w + i] = sa / double(c2);
    f_max[i] = mv;
    f_max[h * w + i] = ma;
  }
  const Vec a = conv7(f_avg, 2, h, w, p.w_avg, p.b_avg);
  const Vec m = conv7(f_max, 2, h, w, p.w_max, p.b_max);
  Vec f_prime(2 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    f_prime[i] = sigmoid(a[i]);
    f_prime[h * w + i] = sigmoid(m[i]);
  }
  Vec out = conv7(f_prime, 2, h, w, p.w_out, p.b_out);
  for (auto& v : out) v = sigmoid(v);
  return out;
}

// gamma = Wg g + bg, beta = Wb g + bb with g the spatial mean of fm (cm x hw);
// out(c, i) = gamma(c) fv(c, i) + beta(c).
inline Vec film(const Vec& fm, std::size_t cm, const Vec& fv, std::size_t cv, std::size_t hw, const Vec& wg, const Vec& bg, const Vec& wb,
                const Vec& bb) {
  Vec g(cm, 0.0);
  for (std::size_t c = 0; c < cm; ++c) {
    for (std::size_t i = 0; i < hw; ++i) g[c] += fm[c * hw + i];
    g[c] /= double(hw);
  }
  Vec out(cv * hw);
  for (std::size_t c = 0; c < cv; ++c) {
    double gamma = bg[c], beta = bb[c];
    for (std::size_t k = 0; k < cm; ++k) {
      gamma += wg[c * cm + k] * g[k];
      beta += wb[c * cm + k] * g[k];
    }
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = gamma * fv[c * hw + i] + beta;
  }
  return out;
}

// 1x1 convolution, c -> c channels, over hw positions; result is position-major (L x d).
inline Vec pointwise_rows(const Vec& x, std::size_t c, std::size_t hw, const Vec& w, const Vec& b) {
  Vec out(hw * c);
  for (std::size_t l = 0; l < hw; ++l)
    for (std::size_t o = 0; o < c; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < c; ++k) acc += w[o * c + k] * x[k * hw + l];
      out[l * c + o] = acc;
    }
  return out;
}

// softmax(K Q^T / sqrt(d)) V + F_vm. kqv: K and V from fvm, Q from fa.
inline Vec cma(const Vec& fvm, const Vec& fa, std::size_t c, std::size_t hw, const Vec& wk, const Vec& bk, const Vec& wq, const Vec& bq,
               const Vec& wv, const Vec& bv, bool kqv) {
  const Vec k = pointwise_rows(kqv ? fvm : fa, c, hw, wk, bk);
  const Vec q = pointwise_rows(fa, c, hw, wq, bq);
  const Vec v = pointwise_rows(fvm, c, hw, wv, bv);
  Vec out(c * hw);
  for (std::size_t i = 0; i < hw; ++i) {
    Vec row(hw);
    double top = -1e300;
    for (std::size_t j = 0; j < hw; ++j) {
      double dot = 0;
      for (std::size_t e = 0; e < c; ++e) dot += k[i * c + e] * q[j * c + e];
      row[j] = dot / std::sqrt(double(c));
      top = std::max(top, row[j]);
    }
    double z = 0;
    for (auto& r : row) z += (r = std::exp(r - top));
    for (std::size_t e = 0; e < c; ++e) {
      double acc = 0;
      for (std::size_t j = 0; j < hw; ++j) acc += row[j] / z * v[j * c + e];
      out[e * hw + i] = acc + fvm[e * hw + i];
    }
  }
  return out;
}

// -(1/N) sum [y log S(z) + (1 - y) log(1 - S(z))] with an explicit sigmoid.
inline double logloss(const Vec& logits, const Vec& labels) {
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits[i]);
    total += labels[i] * std::log(p) + (1 - labels[i]) * std::log(1 - p);
  }
  return -total / double(logits.size());
}

// P(score_fake > score_real) + 0.5 P(tie) over all pairs, in percent.
inline double auc_pairs(const Vec& scores, const std::vector<int>& labels) {
  double credit = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) credit += 1;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return 100.0 * credit / double(pairs);
}

// Textbook Adam with bias correction on a flat parameter vector.
struct Adam {
  double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Vec m, v;
  long t = 0;
  void step(Vec& x, const Vec& g) {
    if (m.empty()) m.assign(x.size(), 0.0), v.assign(x.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, double(t)));
      const double vh = v[i] / (1 - std::pow(b2, double(t)));
      x[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

}  // namespace oracle
