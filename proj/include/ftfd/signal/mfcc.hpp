#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "ftfd/signal/fft.hpp"

namespace ftfd::signal {

struct MfccParams {
  double pre_emphasis = 0.97;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_mels = 26;
  std::size_t n_coeffs = 13;
  double log_floor = 1e-10;
};

/// MFCC feature map, coefficient-major: value(c, t) = values[c * n_steps + t].
struct Spectrogram {
  std::size_t n_coeffs = 0;
  std::size_t n_steps = 0;
  std::vector<double> values;

  double at(std::size_t coeff, std::size_t step) const { return values[coeff * n_steps + step]; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular mel filters spanning 0..Nyquist, evaluated at the DFT bin
/// frequencies: weights[band * n_bins + bin].
inline std::vector<double> mel_filterbank(std::size_t n_mels, std::size_t n_fft, double sample_rate) {
  const std::size_t n_bins = n_fft / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(top * double(i) / double(n_mels + 1));
  std::vector<double> weights(n_mels * n_bins, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = double(k) * sample_rate / double(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      weights[m * n_bins + k] = w;
    }
  }
  return weights;
}

namespace detail {

struct Framing {
  std::size_t frame_len, hop, n_steps;
};

inline Framing framing(std::size_t n_samples, double sample_rate, const MfccParams& p) {
  if (sample_rate <= 0) throw std::invalid_argument("mfcc: sample rate must be positive");
  if (n_samples == 0) throw std::invalid_argument("mfcc: empty audio");
  const auto frame_len = static_cast<std::size_t>(std::lround(sample_rate * p.frame_ms / 1000.0));
  const auto hop = static_cast<std::size_t>(std::lround(sample_rate * p.hop_ms / 1000.0));
  if (n_samples < frame_len) {
    throw std::invalid_argument("mfcc: " + std::to_string(n_samples) + " samples is shorter than one " +
                                std::to_string(frame_len) + "-sample analysis frame");
  }
  // Frames start every hop; the tail frame is zero-padded past the end.
  return {frame_len, hop, n_samples / hop};
}

}  // namespace detail

/// Log mel-band energies per frame: result[t * n_mels + band].
inline std::vector<double> log_mel_energies(std::span<const double> audio, double sample_rate, const MfccParams& p = {}) {
  const auto fr = detail::framing(audio.size(), sample_rate, p);
  std::vector<double> emphasized(audio.size());
  for (std::size_t i = 0; i < audio.size(); ++i) emphasized[i] = audio[i] - (i ? p.pre_emphasis * audio[i - 1] : 0.0);

  std::vector<double> window(fr.frame_len);
  for (std::size_t i = 0; i < fr.frame_len; ++i) {
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * double(i) / double(fr.frame_len - 1));
  }
  const Fft fft(fr.frame_len);
  const std::size_t n_bins = fr.frame_len / 2 + 1;
  const auto bank = mel_filterbank(p.n_mels, fr.frame_len, sample_rate);

  std::vector<double> out(fr.n_steps * p.n_mels);
  std::vector<double> frame(fr.frame_len);
  for (std::size_t t = 0; t < fr.n_steps; ++t) {
    for (std::size_t i = 0; i < fr.frame_len; ++i) {
      const std::size_t idx = t * fr.hop + i;
      frame[i] = idx < emphasized.size() ? emphasized[idx] * window[i] : 0.0;
    }
    const auto spec = fft.forward_real(frame);
    for (std::size_t m = 0; m < p.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) e += bank[m * n_bins + k] * std::abs(spec[k]);
      out[t * p.n_mels + m] = std::log(std::max(e, p.log_floor));
    }
  }
  return out;
}

/// Orthonormal DCT-II of one vector, keeping the first `keep` coefficients.
inline std::vector<double> dct2(std::span<const double> x, std::size_t keep) {
  const std::size_t n = x.size();
  std::vector<double> out(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::cos(std::numbers::pi * double(k) * (double(i) + 0.5) / double(n));
    out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / double(n));
  }
  return out;
}

inline Spectrogram compute_mfcc(std::span<const double> audio, double sample_rate, const MfccParams& p = {}) {
  if (p.n_coeffs > p.n_mels) throw std::invalid_argument("mfcc: more coefficients than mel bands");
  const auto log_mel = log_mel_energies(audio, sample_rate, p);
  const std::size_t steps = log_mel.size() / p.n_mels;
  Spectrogram s{p.n_coeffs, steps, std::vector<double>(p.n_coeffs * steps)};
  for (std::size_t t = 0; t < steps; ++t) {
    const auto c = dct2(std::span<const double>(log_mel).subspan(t * p.n_mels, p.n_mels), p.n_coeffs);
    for (std::size_t k = 0; k < p.n_coeffs; ++k) s.values[k * steps + t] = c[k];
  }
  return s;
}

}  // namespace ftfd::signal
