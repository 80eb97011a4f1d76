#pragma once

// Spatial attention over a visual feature map, built from channel-pooled
// descriptors of the visual map and of an aligned audio map.

#include <string>

#include "ftfd/nn/params.hpp"

namespace ftfd::nn {

/// M = sigma(conv7([sigma(conv7(F_avg)), sigma(conv7(F_max))])) where
/// F_avg = [chanAvg(F_v), chanAvg(F_a)] and F_max likewise. Inputs [N,C,H,W].
template <class T>
Tensor<T> avam_map(ParamStore<T>& store, const std::string& name, const Tensor<T>& fv, const Tensor<T>& fa) {
  if (fv.rank() != fa.rank() || fv.dim(fv.rank() - 1) != fa.dim(fa.rank() - 1) || fv.dim(fv.rank() - 2) != fa.dim(fa.rank() - 2) ||
      (fv.rank() == 4 && fv.dim(0) != fa.dim(0))) {
    throw ShapeError("avam_map: visual " + to_string(fv.shape()) + " and audio " + to_string(fa.shape()) + " are not spatially aligned");
  }
  const Conv2dOptions same{1, 3};
  auto f_avg = concat<T>({channel_pool(PoolKind::avg, fv), channel_pool(PoolKind::avg, fa)}, -3);
  auto f_max = concat<T>({channel_pool(PoolKind::max, fv), channel_pool(PoolKind::max, fa)}, -3);
  auto a = sigmoid(conv(store, name + ".avg", f_avg, 1, 7, same));
  auto m = sigmoid(conv(store, name + ".max", f_max, 1, 7, same));
  return sigmoid(conv(store, name + ".out", concat<T>({a, m}, -3), 1, 7, same));
}

/// The same pipeline with both descriptors taken from the visual map.
template <class T>
Tensor<T> visual_only_map(ParamStore<T>& store, const std::string& name, const Tensor<T>& fv) {
  return avam_map(store, name, fv, fv);
}

/// F_v scaled per position by M (broadcast over channels).
template <class T>
Tensor<T> avam_apply(const Tensor<T>& fv, const Tensor<T>& map) {
  return spatial_mul(fv, map);
}

}  // namespace ftfd::nn
