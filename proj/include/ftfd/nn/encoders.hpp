#pragma once

// VGG-style stream encoders. Tensors are batched [N,C,H,W].

#include <optional>
#include <string>
#include <vector>

#include "ftfd/nn/attention.hpp"
#include "ftfd/nn/config.hpp"
#include "ftfd/nn/params.hpp"

namespace ftfd::nn {

template <class T>
struct BlockFeatures {
  Tensor<T> pre_pool;  // after the block's last activation
  Tensor<T> attended;  // pre_pool scaled by the attention map (== pre_pool without attention)
  Tensor<T> output;    // downsampled block output, input of the next block
  Tensor<T> map;       // attention map [N,1,H,W], undefined without attention
};

template <class T>
using FeaturePyramid = std::vector<BlockFeatures<T>>;

inline std::string block_name(const std::string& prefix, std::size_t b) { return prefix + ".b" + std::to_string(b); }
inline std::string conv_name(const std::string& prefix, std::size_t b, std::size_t j) {
  return block_name(prefix, b) + ".c" + std::to_string(j);
}

/// Options of one pooled encoder pass.
template <class T>
struct EncoderPass {
  std::string prefix;                         // weight prefix, e.g. "visual"
  std::string stats_prefix;                   // batch-norm statistics prefix (defaults to prefix)
  std::string first_conv_prefix;              // weights of block 0 conv 0 (defaults to prefix)
  Attention attention = Attention::none;
  const FeaturePyramid<T>* audio = nullptr;   // Siamese audio pyramid for avam
};

/// Blocks of {conv3x3 + BN + ReLU} x k, optional spatial attention on the
/// block's last activation, then 2x2 max-pool.
template <class T>
FeaturePyramid<T> pooled_encoder(ParamStore<T>& store, const EncoderConfig& cfg, const Tensor<T>& x, Mode mode,
                                 const EncoderPass<T>& pass) {
  if (pass.attention == Attention::avam && (!pass.audio || pass.audio->size() != cfg.blocks())) {
    throw std::invalid_argument("visual encoder: avam attention needs a " + std::to_string(cfg.blocks()) + "-block audio pyramid");
  }
  const std::string stats = pass.stats_prefix.empty() ? pass.prefix : pass.stats_prefix;
  FeaturePyramid<T> pyr(cfg.blocks());
  Tensor<T> h = x;
  for (std::size_t b = 0; b < cfg.blocks(); ++b) {
    for (std::size_t j = 0; j < cfg.convs[b]; ++j) {
      const std::string wname =
          (b == 0 && j == 0 && !pass.first_conv_prefix.empty()) ? conv_name(pass.first_conv_prefix, b, j) : conv_name(pass.prefix, b, j);
      h = conv_bn_relu(store, wname, h, cfg.widths[b], 3, {1, 1}, mode, conv_name(stats, b, j));
    }
    auto& blk = pyr[b];
    blk.pre_pool = h;
    blk.attended = h;
    if (pass.attention != Attention::none) {
      const std::string aname = block_name("attn", b);
      blk.map = pass.attention == Attention::avam ? avam_map(store, aname, h, (*pass.audio)[b].pre_pool)
                                                  : visual_only_map(store, aname, h);
      blk.attended = avam_apply(h, blk.map);
    }
    if (blk.attended.dim(2) < 2 || blk.attended.dim(3) < 2) {
      throw ShapeError("encoder " + pass.prefix + ": block " + std::to_string(b) + " input " + to_string(blk.attended.shape()) +
                       " is too small to pool");
    }
    blk.output = max_pool2d(blk.attended);
    h = blk.output;
  }
  return pyr;
}

template <class T>
void check_channels(const std::string& what, const Tensor<T>& x, std::size_t want) {
  if (x.rank() != 4 || x.dim(1) != want) {
    throw ShapeError(what + ": expected [N," + std::to_string(want) + ",H,W] input, got " + to_string(x.shape()));
  }
}

/// Visual stream over stacked frames [N, T*C, H, W].
template <class T>
FeaturePyramid<T> visual_forward(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& frames, Mode mode,
                                 Attention attention = Attention::none, const FeaturePyramid<T>* audio = nullptr) {
  check_channels("visual encoder", frames, cfg.frames * cfg.channels);
  EncoderPass<T> pass;
  pass.prefix = "visual";
  pass.attention = attention;
  pass.audio = audio;
  return pooled_encoder(store, cfg.encoder, frames, mode, pass);
}

/// Motion stream over stacked flows [N, T*2, H, W].
template <class T>
FeaturePyramid<T> motion_forward(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& flows, Mode mode) {
  check_channels("motion encoder", flows, cfg.frames * 2);
  EncoderPass<T> pass;
  pass.prefix = "motion";
  return pooled_encoder(store, cfg.encoder, flows, mode, pass);
}

/// MFCC batch [N,1,coeffs,steps] bilinearly resized to the visual input size.
template <class T>
Tensor<T> resize_spectrogram(const ModelConfig& cfg, const Tensor<T>& mfcc) {
  check_channels("audio input", mfcc, 1);
  return resize_bilinear(mfcc, cfg.input_size, cfg.input_size);
}

/// Audio stream: per block, 3x3 convs then a 2x2 stride-2 conv in place of
/// pooling, so block outputs match the pooled encoders' spatial sizes.
template <class T>
FeaturePyramid<T> audio_forward(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& resized, Mode mode) {
  check_channels("audio encoder", resized, 1);
  const auto& enc = cfg.encoder;
  FeaturePyramid<T> pyr(enc.blocks());
  Tensor<T> h = resized;
  for (std::size_t b = 0; b < enc.blocks(); ++b) {
    for (std::size_t j = 0; j + 1 < enc.convs[b]; ++j) h = conv_bn_relu(store, conv_name("audio", b, j), h, enc.widths[b], 3, {1, 1}, mode);
    pyr[b].pre_pool = pyr[b].attended = h;
    if (h.dim(2) < 2 || h.dim(3) < 2) throw ShapeError("audio encoder: block " + std::to_string(b) + " input too small to downsample");
    h = conv_bn_relu(store, conv_name("audio", b, enc.convs[b] - 1), h, enc.widths[b], 2, {2, 0}, mode);
    pyr[b].output = h;
  }
  return pyr;
}

/// Visual-topology encoder over the resized spectrogram; feeds avam. With
/// `share_siamese`, every weight but the first conv is the visual encoder's.
template <class T>
FeaturePyramid<T> siamese_audio_pyramid(ParamStore<T>& store, const ModelConfig& cfg, const Tensor<T>& resized, Mode mode) {
  check_channels("siamese encoder", resized, 1);
  EncoderPass<T> pass;
  pass.prefix = "siamese";
  if (cfg.share_siamese) {
    pass.prefix = "visual";
    pass.stats_prefix = pass.first_conv_prefix = "siamese";
  }
  return pooled_encoder(store, cfg.encoder, resized, mode, pass);
}

}  // namespace ftfd::nn
