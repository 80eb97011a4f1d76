#pragma once

// Clip preprocessing: frame stacks, flow stacks and audio windows aligned to
// a run of video frames.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftfd/signal/farneback.hpp"
#include "ftfd/tensor.hpp"

namespace ftfd::signal {

/// Channel-major image (C x H x W), intensities in [0,1].
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  std::size_t plane() const { return height * width; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
  bool operator==(const Image&) const = default;
};

/// Consecutive frames starting at frame index `start` of the source clip.
struct FrameWindow {
  std::vector<Image> frames;
  double fps = 25.0;
  std::size_t start = 0;
};

inline GrayImage to_gray(const Image& img) {
  GrayImage g{img.height, img.width, std::vector<double>(img.plane())};
  if (img.channels == 1) {
    for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = img.pixels[i];
  } else if (img.channels == 3) {
    const std::size_t n = img.plane();
    for (std::size_t i = 0; i < n; ++i) {
      g.pixels[i] = 0.299 * img.pixels[i] + 0.587 * img.pixels[n + i] + 0.114 * img.pixels[2 * n + i];
    }
  } else {
    throw std::invalid_argument("to_gray: expected 1 or 3 channels, got " + std::to_string(img.channels));
  }
  return g;
}

namespace detail {

inline void check_window(const FrameWindow& w, std::size_t need, const char* what) {
  if (w.frames.size() < need) {
    throw std::invalid_argument(std::string(what) + ": window holds " + std::to_string(w.frames.size()) +
                                " frames, need " + std::to_string(need));
  }
  const Image& f0 = w.frames.front();
  for (std::size_t i = 1; i < need; ++i) {
    const Image& f = w.frames[i];
    if (f.channels != f0.channels || f.height != f0.height || f.width != f0.width) {
      throw std::invalid_argument(std::string(what) + ": frame " + std::to_string(i) + " differs in shape from frame 0");
    }
  }
}

}  // namespace detail

/// First `t` frames concatenated along channels: [(t*C), H, W].
template <typename T>
Tensor<T> stack_frames(const FrameWindow& w, std::size_t t) {
  if (t == 0) throw std::invalid_argument("stack_frames: T must be positive");
  detail::check_window(w, t, "stack_frames");
  const Image& f0 = w.frames.front();
  std::vector<T> out;
  out.reserve(t * f0.pixels.size());
  for (std::size_t i = 0; i < t; ++i) out.insert(out.end(), w.frames[i].pixels.begin(), w.frames[i].pixels.end());
  return Tensor<T>::from({t * f0.channels, f0.height, f0.width}, std::move(out));
}

/// Inverse of stack_frames for a known per-frame channel count.
template <typename T>
std::vector<Image> unstack_frames(const Tensor<T>& stacked, std::size_t channels) {
  if (stacked.rank() != 3 || channels == 0 || stacked.dim(0) % channels != 0) {
    throw ShapeError("unstack_frames: " + to_string(stacked.shape()) + " is not a stack of " + std::to_string(channels) +
                     "-channel frames");
  }
  const std::size_t h = stacked.dim(1), w = stacked.dim(2), per = channels * h * w;
  std::vector<Image> frames(stacked.dim(0) / channels);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i] = {channels, h, w, std::vector<float>(per)};
    for (std::size_t k = 0; k < per; ++k) frames[i].pixels[k] = static_cast<float>(stacked[i * per + k]);
  }
  return frames;
}

/// Flow between each consecutive pair of frames: result[i] is frame i -> i+1.
inline std::vector<FlowField> pairwise_flows(std::span<const Image> frames, const FarnebackParams& p = {}) {
  std::vector<FlowField> flows;
  if (frames.size() < 2) return flows;
  flows.reserve(frames.size() - 1);
  GrayImage prev = to_gray(frames[0]);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    GrayImage next = to_gray(frames[i]);
    flows.push_back(farneback_flow(prev, next, p));
    prev = std::move(next);
  }
  return flows;
}

/// Flow fields concatenated along channels, each contributing (dx, dy): [(n*2), H, W].
template <typename T>
Tensor<T> stack_flow_fields(std::span<const FlowField> flows) {
  if (flows.empty()) throw std::invalid_argument("stack_flow_fields: no flow fields");
  const std::size_t h = flows[0].height, w = flows[0].width;
  std::vector<T> out;
  out.reserve(flows.size() * 2 * h * w);
  for (const auto& f : flows) {
    if (f.height != h || f.width != w) throw ShapeError("stack_flow_fields: flow fields differ in size");
    for (double v : f.values) out.push_back(static_cast<T>(v));
  }
  return Tensor<T>::from({flows.size() * 2, h, w}, std::move(out));
}

/// T flow fields from the first T+1 frames of the window: [(T*2), H, W].
template <typename T>
Tensor<T> stack_flows(const FrameWindow& w, std::size_t t, const FarnebackParams& p = {}) {
  if (t == 0) throw std::invalid_argument("stack_flows: T must be positive");
  detail::check_window(w, t + 1, "stack_flows");
  const auto flows = pairwise_flows(std::span<const Image>(w.frames).first(t + 1), p);
  return stack_flow_fields<T>(flows);
}

template <typename T>
std::vector<FlowField> unstack_flows(const Tensor<T>& stacked) {
  if (stacked.rank() != 3 || stacked.dim(0) % 2 != 0) {
    throw ShapeError("unstack_flows: " + to_string(stacked.shape()) + " is not a flow stack");
  }
  const std::size_t h = stacked.dim(1), w = stacked.dim(2), per = 2 * h * w;
  std::vector<FlowField> flows(stacked.dim(0) / 2);
  for (std::size_t i = 0; i < flows.size(); ++i) {
    flows[i] = {h, w, std::vector<double>(per)};
    for (std::size_t k = 0; k < per; ++k) flows[i].values[k] = static_cast<double>(stacked[i * per + k]);
  }
  return flows;
}

/// Sample range covered by frames [start, start + t): first sample index
/// (possibly negative) and length.
struct AudioSpan {
  long begin;
  std::size_t length;
};

inline AudioSpan audio_span(long start_frame, std::size_t t, double sample_rate, double fps) {
  if (sample_rate <= 0 || fps <= 0) throw std::invalid_argument("align_audio_window: sample rate and fps must be positive");
  const double per_frame = sample_rate / fps;
  return {std::lround(double(start_frame) * per_frame), static_cast<std::size_t>(std::lround(double(t) * per_frame))};
}

/// Audio for frames [start, start + t), zero-padded where the span runs past
/// either end of the recording. `start_frame` may be negative.
inline std::vector<double> align_audio_window(std::span<const double> audio, double sample_rate, long start_frame,
                                              std::size_t t, double fps) {
  const AudioSpan s = audio_span(start_frame, t, sample_rate, fps);
  const long end = s.begin + long(s.length);
  if (audio.empty() || end <= 0 || s.begin >= long(audio.size())) {
    throw std::invalid_argument("align_audio_window: frames [" + std::to_string(start_frame) + ", " +
                                std::to_string(start_frame + long(t)) + ") fall outside the " +
                                std::to_string(audio.size()) + "-sample recording");
  }
  std::vector<double> out(s.length, 0.0);
  for (long i = std::max(s.begin, 0L); i < std::min(end, long(audio.size())); ++i) out[std::size_t(i - s.begin)] = audio[std::size_t(i)];
  return out;
}

inline std::vector<double> align_audio_window(std::span<const double> audio, double sample_rate, const FrameWindow& w,
                                              std::size_t t) {
  return align_audio_window(audio, sample_rate, long(w.start), t, w.fps);
}

}  // namespace ftfd::signal
