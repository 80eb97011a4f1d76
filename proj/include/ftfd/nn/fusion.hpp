#pragma once

// Cross-modal fusion of the trailing encoder blocks: FiLM modulation of
// visual by motion, cross-modal attention with audio, then multi-scale
// pooling and concatenation. Also the plain concat/sum baselines.

#include <cmath>
#include <string>
#include <vector>

#include "ftfd/nn/config.hpp"
#include "ftfd/nn/encoders.hpp"
#include "ftfd/nn/params.hpp"

namespace ftfd::nn {

enum class CmaVariant { standard, kqv };

/// gamma(c) * F_v + beta(c), with gamma, beta linear in the spatial mean of F_m.
template <class T>
Tensor<T> film(ParamStore<T>& store, const std::string& name, const Tensor<T>& fm, const Tensor<T>& fv) {
  if (fm.rank() != 4 || fv.rank() != 4 || fm.dim(0) != fv.dim(0) || fm.dim(2) != fv.dim(2) || fm.dim(3) != fv.dim(3)) {
    throw ShapeError("film: motion " + to_string(fm.shape()) + " and visual " + to_string(fv.shape()) + " are not aligned");
  }
  const std::size_t cm = fm.dim(1), cv = fv.dim(1);
  const auto g = global_avg_pool(fm);
  const auto gamma = linear(g, store.param(name + ".gamma.weight", {cv, cm}, Init::kaiming_uniform, cm),
                            store.param(name + ".gamma.bias", {cv}, Init::ones));
  const auto beta = linear(g, store.param(name + ".beta.weight", {cv, cm}, Init::kaiming_uniform, cm),
                           store.param(name + ".beta.bias", {cv}, Init::zeros));
  return channel_affine(fv, gamma, beta);
}

/// softmax(K Q^T / sqrt(d)) V + F_vm over the L = H*W positions, d = C.
/// standard: K, Q from F_a and V from F_vm; kqv: K, V from F_vm and Q from F_a.
template <class T>
Tensor<T> cma(ParamStore<T>& store, const std::string& name, const Tensor<T>& fvm, const Tensor<T>& fa,
              CmaVariant variant = CmaVariant::standard) {
  if (fvm.rank() != 4 || fvm.shape() != fa.shape()) {
    throw ShapeError("cma: F_vm " + to_string(fvm.shape()) + " and F_a " + to_string(fa.shape()) + " must have identical shape");
  }
  const std::size_t n = fvm.dim(0), c = fvm.dim(1), h = fvm.dim(2), w = fvm.dim(3), l = h * w;
  const auto& k_src = variant == CmaVariant::standard ? fa : fvm;
  auto rows = [&](const Tensor<T>& x) { return transpose(reshape(x, {n, c, l})); };  // [N,L,d]
  const auto k = rows(conv(store, name + ".k", k_src, c, 1, {}));
  const auto q = rows(conv(store, name + ".q", fa, c, 1, {}));
  const auto v = rows(conv(store, name + ".v", fvm, c, 1, {}));
  const auto scores = scale(matmul(k, transpose(q)), T(1.0 / std::sqrt(double(c))));
  const auto attended = matmul(softmax(scores, -1), v);  // [N,L,d]
  return add(reshape(transpose(attended), {n, c, h, w}), fvm);
}

/// Repeated 2x2 max-pooling until the map reaches `size` x `size`.
template <class T>
Tensor<T> downsample_to(const Tensor<T>& x, std::size_t size) {
  Tensor<T> y = x;
  while (y.dim(2) > size) y = max_pool2d(y);
  if (y.dim(2) != size || y.dim(3) != size) {
    throw ShapeError("fusion: cannot pool " + to_string(x.shape()) + " down to " + std::to_string(size) + "x" + std::to_string(size));
  }
  return y;
}

/// Per-stream block outputs handed to fusion; disabled streams are empty.
template <class T>
struct StreamPyramids {
  const FeaturePyramid<T>* visual = nullptr;
  const FeaturePyramid<T>* motion = nullptr;
  const FeaturePyramid<T>* audio = nullptr;
};

template <class T>
Tensor<T> fuse_block(ParamStore<T>& store, const ModelConfig& cfg, const StreamPyramids<T>& s, std::size_t b, Mode mode) {
  const std::string name = block_name("fusion", b);
  std::vector<Tensor<T>> present;
  for (auto* p : {s.visual, s.motion, s.audio})
    if (p) present.push_back((*p)[b].output);
  for (const auto& t : present) {
    if (t.dim(2) != present[0].dim(2) || t.dim(3) != present[0].dim(3) || t.dim(0) != present[0].dim(0)) {
      throw ShapeError("fusion: pyramids are misaligned at block " + std::to_string(b));
    }
  }
  if (present.size() == 1) return present[0];

  if (cfg.fusion == FusionStrategy::concat) return concat(present, 1);
  if (cfg.fusion == FusionStrategy::sum) {
    const std::size_t width = cfg.encoder.widths[b];
    const char* names[] = {".proj_v", ".proj_m", ".proj_a"};
    Tensor<T> total;
    std::size_t i = 0;
    for (auto* p : {s.visual, s.motion, s.audio}) {
      const char* suffix = names[i++];
      if (!p) continue;
      auto proj = conv(store, name + suffix, (*p)[b].output, width, 1, {}, false);
      total = total.defined() ? add(total, proj) : proj;
    }
    return total;
  }

  // CMF family. Without a visual stream, motion takes the visual role.
  const std::size_t width = cfg.encoder.widths[b];
  const Tensor<T>& base = s.visual ? (*s.visual)[b].output : (*s.motion)[b].output;
  Tensor<T> modulated = base;
  if (s.visual && s.motion) modulated = film(store, name + ".film", (*s.motion)[b].output, base);
  const auto fvm = conv_bn_relu(store, name + ".conv", modulated, width, 3, {1, 1}, mode);
  if (!s.audio) return fvm;
  const auto variant = cfg.fusion == FusionStrategy::cmf_kqv ? CmaVariant::kqv : CmaVariant::standard;
  return cma(store, name + ".cma", fvm, (*s.audio)[b].output, variant);
}

/// Fused feature of the consumed trailing blocks, pooled to the deepest
/// scale, channel-concatenated and flattened to [N, D].
template <class T>
Tensor<T> fuse_multiscale(ParamStore<T>& store, const ModelConfig& cfg, const StreamPyramids<T>& s, Mode mode) {
  const std::size_t blocks = cfg.encoder.blocks(), used = cfg.consumed_blocks();
  for (auto* p : {s.visual, s.motion, s.audio}) {
    if (p && p->size() != blocks) throw ShapeError("fusion: pyramid has " + std::to_string(p->size()) + " blocks, expected " + std::to_string(blocks));
  }
  std::vector<Tensor<T>> parts;
  for (std::size_t b = blocks - used; b < blocks; ++b) parts.push_back(fuse_block(store, cfg, s, b, mode));
  const std::size_t deepest = parts.back().dim(2);
  for (auto& p : parts) p = downsample_to(p, deepest);
  auto joined = parts.size() == 1 ? parts[0] : concat(parts, 1);
  return reshape(joined, {joined.dim(0), joined.size() / joined.dim(0)});
}

/// Spatial size of every pooled block output for a square input.
inline std::vector<std::size_t> block_sizes(const ModelConfig& cfg) {
  std::vector<std::size_t> sizes;
  std::size_t s = cfg.input_size;
  for (std::size_t b = 0; b < cfg.encoder.blocks(); ++b) sizes.push_back(s /= 2);
  return sizes;
}

/// Flat fused length implied by the config alone.
inline std::size_t fused_length(const ModelConfig& cfg) {
  const auto sizes = block_sizes(cfg);
  const std::size_t blocks = cfg.encoder.blocks(), deepest = sizes.back();
  const auto& m = cfg.modalities;
  std::size_t channels = 0;
  for (std::size_t b = blocks - cfg.consumed_blocks(); b < blocks; ++b) {
    const std::size_t wdt = cfg.encoder.widths[b];
    channels += (cfg.fusion == FusionStrategy::concat && m.count() > 1) ? wdt * m.count() : wdt;
  }
  return channels * deepest * deepest;
}

}  // namespace ftfd::nn
