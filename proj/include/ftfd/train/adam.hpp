#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftfd/tensor.hpp"

namespace ftfd::train {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam moments per named weight plus the shared step counter.
template <class T>
struct OptimState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, std::vector<T>> m, v;
};

/// One bias-corrected Adam update of every weight from its accumulated
/// gradient. Weights without a gradient count as zero-gradient. All gradients
/// are checked before any weight changes.
template <class T>
void adam_step(std::map<std::string, Tensor<T>>& weights, OptimState<T>& st) {
  for (const auto& [name, w] : weights) {
    if (!w.has_grad()) continue;
    for (T g : w.node()->grad)
      if (!std::isfinite(g)) throw NonFiniteError("adam: non-finite gradient in weight " + name);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  for (auto& [name, w] : weights) {
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.empty()) m.assign(w.size(), T{0}), v.assign(w.size(), T{0});
    if (m.size() != w.size()) throw ShapeError("adam: moment size mismatch for weight " + name);
    const std::vector<T>* g = w.has_grad() ? &w.node()->grad : nullptr;
    auto x = w.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = g ? double((*g)[i]) : 0.0;
      m[i] = T(st.beta1 * double(m[i]) + (1 - st.beta1) * gi);
      v[i] = T(st.beta2 * double(v[i]) + (1 - st.beta2) * gi * gi);
      const double mh = double(m[i]) / c1, vh = double(v[i]) / c2;
      x[i] = T(double(x[i]) - st.lr * mh / (std::sqrt(vh) + st.eps));
    }
  }
}

}  // namespace ftfd::train
