#pragma once

// The full detector: stream encoders, attention, fusion and a three-layer
// classifier emitting one logit per sample.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ftfd/io/checkpoint.hpp"
#include "ftfd/nn/config.hpp"
#include "ftfd/nn/encoders.hpp"
#include "ftfd/nn/fusion.hpp"
#include "ftfd/nn/inputs.hpp"
#include "ftfd/nn/params.hpp"

namespace ftfd::nn {

template <class T>
struct ForwardTrace {
  FeaturePyramid<T> visual, motion, audio, siamese;
  Tensor<T> fused;   // [N, D]
  Tensor<T> logits;  // [N]
};

template <class T>
class FtfdNet {
 public:
  explicit FtfdNet(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)), store_(seed), dropout_rng_(seed ^ 0x5eedd209u) {
    cfg_.validate();
    materialize();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }
  std::mt19937_64& dropout_rng() { return dropout_rng_; }

  ForwardTrace<T> trace(const ModelInputs<T>& in, Mode mode) {
    const auto& m = cfg_.modalities;
    const std::size_t n = check_inputs(in);
    ForwardTrace<T> tr;
    Tensor<T> spec;
    if (m.audio) {
      spec = resize_spectrogram(cfg_, in.mfcc);
      tr.audio = audio_forward(store_, cfg_, spec, mode);
      if (m.visual && cfg_.attention == Attention::avam) tr.siamese = siamese_audio_pyramid(store_, cfg_, spec, mode);
    }
    if (m.visual) {
      tr.visual = visual_forward(store_, cfg_, in.frames, mode, cfg_.attention, tr.siamese.empty() ? nullptr : &tr.siamese);
    }
    if (m.motion) tr.motion = motion_forward(store_, cfg_, in.flows, mode);

    StreamPyramids<T> s;
    if (m.visual) s.visual = &tr.visual;
    if (m.motion) s.motion = &tr.motion;
    if (m.audio) s.audio = &tr.audio;
    tr.fused = fuse_multiscale(store_, cfg_, s, mode);

    Tensor<T> h = tr.fused;
    for (std::size_t i = 0; i < cfg_.classifier.size(); ++i) {
      h = dropout(relu(dense(store_, "cls.fc" + std::to_string(i + 1), h, cfg_.classifier[i])), cfg_.dropout, mode, dropout_rng_);
    }
    h = dense(store_, "cls.fc" + std::to_string(cfg_.classifier.size() + 1), h, 1);
    tr.logits = reshape(h, {n});
    return tr;
  }

  Tensor<T> forward(const ModelInputs<T>& in, Mode mode) { return trace(in, mode).logits; }

  std::string config_json() const { return to_json(cfg_).dump(); }

  io::Checkpoint<T> checkpoint(std::uint64_t step) const { return {config_json(), step, store_.export_tensors()}; }

  void load(const io::Checkpoint<T>& ck) {
    if (io::fnv1a64(ck.config) != io::fnv1a64(config_json())) {
      throw io::FormatError(io::FormatError::Kind::digest_mismatch, "checkpoint was saved with a different model config");
    }
    store_.import_tensors(ck.tensors);
  }

 private:
  std::size_t check_inputs(const ModelInputs<T>& in) const {
    const auto& m = cfg_.modalities;
    std::size_t n = 0;
    auto need = [&](bool on, const Tensor<T>& t, const char* what) {
      if (!on) return;
      if (!t.defined()) throw std::invalid_argument(std::string("forward: modality mask enables ") + what + " but no input was given");
      if (t.rank() != 4) throw ShapeError(std::string("forward: ") + what + " input must be [N,C,H,W], got " + to_string(t.shape()));
      if (n && t.dim(0) != n) throw ShapeError("forward: inputs disagree on batch size");
      n = t.dim(0);
    };
    need(m.visual, in.frames, "visual");
    need(m.motion, in.flows, "motion");
    need(m.audio, in.mfcc, "audio");
    if (m.audio && (in.mfcc.dim(2) != cfg_.mfcc_coeffs || in.mfcc.dim(3) != cfg_.mfcc_steps())) {
      throw ShapeError("forward: MFCC input " + to_string(in.mfcc.shape()) + " does not match the configured " +
                       std::to_string(cfg_.mfcc_coeffs) + "x" + std::to_string(cfg_.mfcc_steps()));
    }
    return n;
  }

  // Creates every parameter with one throwaway pass, then locks the store.
  void materialize() {
    const std::size_t n = 2, s = cfg_.input_size;
    ModelInputs<T> in;
    if (cfg_.modalities.visual) in.frames = Tensor<T>::zeros({n, cfg_.frames * cfg_.channels, s, s});
    if (cfg_.modalities.motion) in.flows = Tensor<T>::zeros({n, cfg_.frames * 2, s, s});
    if (cfg_.modalities.audio) in.mfcc = Tensor<T>::zeros({n, 1, cfg_.mfcc_coeffs, cfg_.mfcc_steps()});
    const auto rng_state = dropout_rng_;
    {
      NoGradGuard no_grad;
      trace(in, Mode::train);
    }
    dropout_rng_ = rng_state;
    for (auto& [_, st] : store_.bn()) st = BatchNormStats<T>(st.mean.size());
    store_.freeze();
  }

  ModelConfig cfg_;
  ParamStore<T> store_;
  std::mt19937_64 dropout_rng_;
};

/// LogLoss on logits (mean binary cross-entropy, overflow-safe).
template <class T>
Tensor<T> logloss(const Tensor<T>& logits, const std::vector<T>& labels) {
  return bce_with_logits(logits, labels);
}

struct DetectionReport {
  std::vector<double> logits;
  double score = 0;
  bool fake = false;
  double threshold = 0.5;
};

inline DetectionReport make_report(std::vector<double> logits, double threshold = 0.5) {
  if (logits.empty()) throw std::invalid_argument("detection report: no window scores");
  DetectionReport r{std::move(logits), 0.0, false, threshold};
  for (double z : r.logits) r.score += sigmoid_scalar(z);
  r.score /= double(r.logits.size());
  r.fake = r.score >= threshold;
  return r;
}

/// Scores the T+1-frame windows of the first `segment` frames (every
/// `stride`-th start) and averages their probabilities.
template <class T>
DetectionReport predict_segment(FtfdNet<T>& net, const PreparedClip& clip, double threshold = 0.5, std::size_t segment = 25,
                                std::size_t batch = 32, std::size_t stride = 1) {
  const std::size_t t = net.config().frames;
  if (clip.frames.size() < segment) {
    throw std::invalid_argument("clip " + clip.id + " has " + std::to_string(clip.frames.size()) + " frames, segment needs " +
                                std::to_string(segment));
  }
  if (segment < t + 1) throw std::invalid_argument("segment shorter than one window of T+1 frames");
  if (stride == 0 || batch == 0) throw std::invalid_argument("predict_segment: stride and batch must be positive");
  std::vector<WindowRef> windows;
  for (std::size_t s = 0; s + t + 1 <= segment; s += stride) windows.push_back({&clip, s});
  std::vector<double> logits;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < windows.size(); i += batch) {
    const auto part = std::span<const WindowRef>(windows).subspan(i, std::min(batch, windows.size() - i));
    const auto out = net.forward(assemble_batch<T>(net.config(), part), Mode::eval);
    for (T z : out.data()) logits.push_back(double(z));
  }
  return make_report(std::move(logits), threshold);
}

}  // namespace ftfd::nn
