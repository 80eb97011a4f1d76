#pragma once

// Clip-level caches and the assembly of model input batches from windows of
// T+1 consecutive frames.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ftfd/io/clip.hpp"
#include "ftfd/nn/config.hpp"
#include "ftfd/signal/mfcc.hpp"
#include "ftfd/signal/prep.hpp"

namespace ftfd::nn {

template <class T>
struct ModelInputs {
  Tensor<T> frames;  // [N, T*C, H, W]
  Tensor<T> flows;   // [N, T*2, H, W]
  Tensor<T> mfcc;    // [N, 1, coeffs, steps]
  std::vector<T> labels;

  std::size_t batch() const {
    for (const auto* t : {&frames, &flows, &mfcc})
      if (t->defined()) return t->dim(0);
    return 0;
  }
};

/// A clip with its pairwise flows precomputed (flow i is frame i -> i+1,
/// planar dx then dy, float).
struct PreparedClip {
  std::string id;
  int label = 0;
  double fps = 25.0;
  double sample_rate = 16000.0;
  std::vector<signal::Image> frames;
  std::vector<std::vector<float>> flows;
  std::vector<double> audio;

  std::size_t num_windows(std::size_t t) const { return frames.size() >= t + 1 ? frames.size() - t : 0; }
};

inline PreparedClip prepare_clip(io::Clip clip, bool with_flows, const signal::FarnebackParams& fp = {}) {
  PreparedClip p;
  p.id = std::move(clip.id);
  p.label = clip.label;
  p.fps = clip.fps;
  p.sample_rate = clip.audio.sample_rate;
  p.audio = std::move(clip.audio.samples);
  p.frames = std::move(clip.frames);
  if (with_flows) {
    for (const auto& f : signal::pairwise_flows(p.frames, fp)) p.flows.emplace_back(f.values.begin(), f.values.end());
  }
  return p;
}

/// MFCC of the audio aligned to frames [start, start + T).
inline signal::Spectrogram window_mfcc(const PreparedClip& c, std::size_t start, std::size_t t) {
  const auto slice = signal::align_audio_window(c.audio, c.sample_rate, long(start), t, c.fps);
  return signal::compute_mfcc(slice, c.sample_rate);
}

struct WindowRef {
  const PreparedClip* clip;
  std::size_t start;
};

/// Stacks the requested windows into one batch; only enabled modalities are built.
template <class T>
ModelInputs<T> assemble_batch(const ModelConfig& cfg, std::span<const WindowRef> windows) {
  if (windows.empty()) throw std::invalid_argument("assemble_batch: no windows");
  const std::size_t n = windows.size(), t = cfg.frames, hw = cfg.input_size * cfg.input_size;
  ModelInputs<T> in;
  std::vector<T> frames, flows, mfcc;
  if (cfg.modalities.visual) frames.reserve(n * t * cfg.channels * hw);
  if (cfg.modalities.motion) flows.reserve(n * t * 2 * hw);
  for (const auto& w : windows) {
    const PreparedClip& c = *w.clip;
    if (w.start + t + 1 > c.frames.size()) {
      throw std::invalid_argument("clip " + c.id + ": window at frame " + std::to_string(w.start) + " needs " + std::to_string(t + 1) +
                                  " frames, clip has " + std::to_string(c.frames.size()));
    }
    const auto& f0 = c.frames[w.start];
    if (f0.channels != cfg.channels || f0.height != cfg.input_size || f0.width != cfg.input_size) {
      throw ShapeError("clip " + c.id + ": frames are " + std::to_string(f0.channels) + "x" + std::to_string(f0.height) + "x" +
                       std::to_string(f0.width) + ", model expects " + std::to_string(cfg.channels) + "x" + std::to_string(cfg.input_size) +
                       "x" + std::to_string(cfg.input_size));
    }
    if (cfg.modalities.visual)
      for (std::size_t i = 0; i < t; ++i) frames.insert(frames.end(), c.frames[w.start + i].pixels.begin(), c.frames[w.start + i].pixels.end());
    if (cfg.modalities.motion) {
      if (c.flows.size() + 1 < c.frames.size()) throw std::logic_error("clip " + c.id + " was prepared without flows");
      for (std::size_t i = 0; i < t; ++i) flows.insert(flows.end(), c.flows[w.start + i].begin(), c.flows[w.start + i].end());
    }
    if (cfg.modalities.audio) {
      const auto s = window_mfcc(c, w.start, t);
      if (s.n_coeffs != cfg.mfcc_coeffs || s.n_steps != cfg.mfcc_steps()) {
        throw ShapeError("clip " + c.id + ": MFCC window is " + std::to_string(s.n_coeffs) + "x" + std::to_string(s.n_steps) +
                         ", model expects " + std::to_string(cfg.mfcc_coeffs) + "x" + std::to_string(cfg.mfcc_steps()));
      }
      mfcc.insert(mfcc.end(), s.values.begin(), s.values.end());
    }
    in.labels.push_back(T(c.label));
  }
  const std::size_t s = cfg.input_size;
  if (cfg.modalities.visual) in.frames = Tensor<T>::from({n, t * cfg.channels, s, s}, std::move(frames));
  if (cfg.modalities.motion) in.flows = Tensor<T>::from({n, t * 2, s, s}, std::move(flows));
  if (cfg.modalities.audio) in.mfcc = Tensor<T>::from({n, 1, cfg.mfcc_coeffs, cfg.mfcc_steps()}, std::move(mfcc));
  return in;
}

}  // namespace ftfd::nn
