#pragma once

// Named parameter storage. Parameters are created on first use with a shape
// supplied by the layer that owns them; each is initialized from a generator
// seeded by (model seed, parameter name), so creation order never matters.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "ftfd/io/checkpoint.hpp"
#include "ftfd/ops.hpp"

namespace ftfd::nn {

enum class Init { kaiming_uniform, zeros, ones };

template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  /// Returns the named parameter, creating it if the store is still open.
  const Tensor<T>& param(const std::string& name, const Shape& shape, Init init, std::size_t fan_in = 1, T fill = T{0}) {
    auto it = params_.find(name);
    if (it != params_.end()) {
      if (it->second.shape() != shape) {
        throw ShapeError("parameter " + name + " has shape " + to_string(it->second.shape()) + ", layer expects " + to_string(shape));
      }
      return it->second;
    }
    if (frozen_) throw std::logic_error("unknown parameter " + name + " (store is frozen)");
    std::vector<T> v(numel(shape), fill);
    if (init == Init::ones) std::fill(v.begin(), v.end(), T{1});
    if (init == Init::kaiming_uniform) {
      std::mt19937_64 rng(seed_ ^ io::fnv1a64(name));
      const double bound = std::sqrt(6.0 / double(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& x : v) x = T(u(rng));
    }
    return params_.emplace(name, Tensor<T>::from(shape, std::move(v), true)).first->second;
  }

  BatchNormStats<T>& bn_stats(const std::string& name) {
    auto it = bn_.find(name);
    if (it == bn_.end()) {
      if (frozen_) throw std::logic_error("unknown batch-norm layer " + name + " (store is frozen)");
      it = bn_.emplace(name, BatchNormStats<T>()).first;
    }
    return it->second;
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  std::map<std::string, Tensor<T>>& params() { return params_; }
  const std::map<std::string, Tensor<T>>& params() const { return params_; }
  std::map<std::string, BatchNormStats<T>>& bn() { return bn_; }
  const std::map<std::string, BatchNormStats<T>>& bn() const { return bn_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

  /// Weights plus running statistics of every initialized batch-norm layer.
  std::map<std::string, Tensor<T>> export_tensors() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& [name, t] : params_) out.emplace(name, t.detach());
    for (const auto& [name, s] : bn_) {
      if (!s.initialized) continue;
      out.emplace(name + ".running_mean", Tensor<T>::from({s.mean.size()}, s.mean));
      out.emplace(name + ".running_var", Tensor<T>::from({s.var.size()}, s.var));
    }
    return out;
  }

  /// Overwrites existing parameters and statistics from `tensors`. Every
  /// parameter must be present; names the store does not know are rejected.
  void import_tensors(const std::map<std::string, Tensor<T>>& tensors) {
    std::size_t used = 0;
    for (auto& [name, t] : params_) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw std::runtime_error("checkpoint lacks parameter " + name);
      if (it->second.shape() != t.shape()) {
        throw ShapeError("checkpoint parameter " + name + " has shape " + to_string(it->second.shape()) + ", model expects " +
                         to_string(t.shape()));
      }
      auto dst = t.mutable_data();
      std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
      ++used;
    }
    for (auto& [name, s] : bn_) {
      auto m = tensors.find(name + ".running_mean");
      auto v = tensors.find(name + ".running_var");
      if (m == tensors.end() || v == tensors.end()) {
        s = BatchNormStats<T>(s.mean.size());
        continue;
      }
      s.mean = m->second.values();
      s.var = v->second.values();
      s.initialized = true;
      used += 2;
    }
    if (used != tensors.size()) throw std::runtime_error("checkpoint holds tensors the model does not define");
  }

 private:
  std::uint64_t seed_;
  bool frozen_ = false;
  std::map<std::string, Tensor<T>> params_;
  std::map<std::string, BatchNormStats<T>> bn_;
};

// ---------------------------------------------------------------- layers

template <class T>
Tensor<T> conv(ParamStore<T>& store, const std::string& name, const Tensor<T>& x, std::size_t out_ch, std::size_t k,
               Conv2dOptions opt, bool bias = true) {
  const std::size_t in_ch = x.dim(x.rank() - 3);
  const auto& w = store.param(name + ".weight", {out_ch, in_ch, k, k}, Init::kaiming_uniform, in_ch * k * k);
  if (!bias) return conv2d(x, w, Tensor<T>(), opt);
  return conv2d(x, w, store.param(name + ".bias", {out_ch}, Init::zeros), opt);
}

/// conv (no bias) -> batch norm -> ReLU. `stats_name` lets weight-sharing
/// encoders keep their own running statistics.
template <class T>
Tensor<T> conv_bn_relu(ParamStore<T>& store, const std::string& name, const Tensor<T>& x, std::size_t out_ch, std::size_t k,
                       Conv2dOptions opt, Mode mode, const std::string& stats_name = "") {
  auto y = conv(store, name, x, out_ch, k, opt, false);
  const auto& gamma = store.param(name + ".bn.gamma", {out_ch}, Init::ones);
  const auto& beta = store.param(name + ".bn.beta", {out_ch}, Init::zeros);
  return relu(batchnorm2d(y, gamma, beta, store.bn_stats((stats_name.empty() ? name : stats_name) + ".bn"), mode));
}

template <class T>
Tensor<T> dense(ParamStore<T>& store, const std::string& name, const Tensor<T>& x, std::size_t out) {
  const std::size_t in = x.shape().back();
  return linear(x, store.param(name + ".weight", {out, in}, Init::kaiming_uniform, in), store.param(name + ".bias", {out}, Init::zeros));
}

}  // namespace ftfd::nn
