#pragma once

// Procedural talking-face surrogates. A textured face drifts smoothly; the
// mouth's vertical aperture follows a syllable-like envelope that also
// amplitude-modulates a harmonic tone. Fakes break either the audio-visual
// coupling (desync) or the temporal smoothness of the lips (jitter).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftfd/io/clip.hpp"
#include "ftfd/io/manifest.hpp"
#include "ftfd/io/wav.hpp"
#include "ftfd/signal/prep.hpp"

namespace ftfd::synth {

enum class FakeMode { desync, jitter, both };

inline const char* to_string(FakeMode m) { return m == FakeMode::desync ? "desync" : m == FakeMode::jitter ? "jitter" : "both"; }

inline FakeMode parse_fake_mode(const std::string& s) {
  if (s == "desync") return FakeMode::desync;
  if (s == "jitter") return FakeMode::jitter;
  if (s == "both") return FakeMode::both;
  throw std::invalid_argument("unknown fake mode '" + s + "' (expected desync, jitter, both)");
}

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t frames = 25;
  double fps = 25.0;
  std::size_t size = 56;
  Rect lip;  // mouth region at rest; all-zero means "derive from size"
  double carrier_lo = 120.0, carrier_hi = 360.0;
  std::uint32_t sample_rate = 16000;
  FakeMode mode = FakeMode::both;
  double jitter_px = 3.0;

  Rect lip_region() const {
    if (lip.w > 0 && lip.h > 0) return lip;
    const double s = double(size);
    return {int(std::lround(0.30 * s)), int(std::lround(0.60 * s)), int(std::lround(0.40 * s)), int(std::lround(0.22 * s))};
  }

  void validate() const {
    const Rect r = lip_region();
    const int margin = int(std::ceil(jitter_px)) + 1;
    if (size < 16) throw std::invalid_argument("synth: image size must be at least 16");
    if (frames < 2) throw std::invalid_argument("synth: clip needs at least 2 frames");
    if (r.w <= 0 || r.h <= 0 || r.x - margin < 0 || r.y - margin < 0 || r.x + r.w + margin > int(size) || r.y + r.h + margin > int(size)) {
      throw std::invalid_argument("synth: lip region (" + std::to_string(r.x) + "," + std::to_string(r.y) + " " + std::to_string(r.w) + "x" +
                                  std::to_string(r.h) + ") plus jitter margin is not strictly inside the " + std::to_string(size) + "px frame");
    }
    if (fps <= 0 || sample_rate == 0 || carrier_lo <= 0 || carrier_hi < carrier_lo) throw std::invalid_argument("synth: bad rate or carrier range");
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t clip_seed(std::uint64_t base, std::uint64_t index) { return splitmix64(splitmix64(base) ^ index); }

/// Piecewise syllable envelope: raised-sine bumps separated by pauses.
class Envelope {
 public:
  Envelope(std::mt19937_64& rng, double duration) {
    std::uniform_real_distribution<double> len(0.08, 0.20), gap(0.04, 0.30), amp(0.5, 1.0), lead(0.0, 0.15);
    double t = lead(rng);
    while (t < duration) {
      const double d = len(rng);
      bumps_.push_back({t, d, amp(rng)});
      t += d + gap(rng);
    }
  }

  double operator()(double t) const {
    for (const auto& b : bumps_) {
      if (t >= b.start && t < b.start + b.length) {
        const double s = std::sin(std::numbers::pi * (t - b.start) / b.length);
        return b.amp * s * s;
      }
    }
    return 0.0;
  }

 private:
  struct Bump {
    double start, length, amp;
  };
  std::vector<Bump> bumps_;
};

/// Generator-internal series, exposed for statistics oracles.
struct SynthTrace {
  std::vector<double> aperture;         // per frame, in [0,1]
  std::vector<double> audio_envelope;   // per frame, envelope driving the audio at the frame centre
  std::vector<double> lip_dx, lip_dy;   // per-frame lip displacement from jitter (px)
  std::vector<double> drift_x, drift_y; // per-frame global face drift (px)
};

struct SynthClip {
  io::Clip clip;
  SynthTrace trace;
};

namespace detail {

inline double smoothstep_edge(double signed_dist) { return std::clamp(0.5 - signed_dist, 0.0, 1.0); }

// Approximate signed distance (px) to an axis-aligned ellipse.
inline double ellipse_sd(double x, double y, double cx, double cy, double rx, double ry) {
  const double q = std::hypot((x - cx) / rx, (y - cy) / ry);
  return (q - 1.0) * std::min(rx, ry);
}

struct Look {
  double bg[3], bg_grad[3], skin[3], lip[3];
  double tex_amp[4], tex_kx[4], tex_ky[4], tex_ph[4];
  double drift_amp[2], drift_freq[2], drift_ph[2];
};

inline Look random_look(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Look l{};
  for (int c = 0; c < 3; ++c) {
    l.bg[c] = 0.15 + 0.35 * u(rng);
    l.bg_grad[c] = 0.1 * (u(rng) - 0.5);
  }
  const double tone = 0.45 + 0.35 * u(rng);
  l.skin[0] = tone + 0.12;
  l.skin[1] = tone * 0.82;
  l.skin[2] = tone * 0.68;
  l.lip[0] = 0.55 + 0.2 * u(rng);
  l.lip[1] = 0.18 + 0.1 * u(rng);
  l.lip[2] = 0.2 + 0.1 * u(rng);
  for (int i = 0; i < 4; ++i) {
    l.tex_amp[i] = 0.03 + 0.04 * u(rng);
    l.tex_kx[i] = 2 * std::numbers::pi * (0.05 + 0.15 * u(rng));
    l.tex_ky[i] = 2 * std::numbers::pi * (0.05 + 0.15 * u(rng));
    l.tex_ph[i] = 2 * std::numbers::pi * u(rng);
  }
  for (int i = 0; i < 2; ++i) {
    l.drift_amp[i] = 0.5 + 1.5 * u(rng);
    l.drift_freq[i] = 0.2 + 0.8 * u(rng);
    l.drift_ph[i] = 2 * std::numbers::pi * u(rng);
  }
  return l;
}

inline signal::Image render(const SynthSpec& spec, const Look& l, const Rect& lip, double drift_x, double drift_y, double lip_dx,
                            double lip_dy, double aperture) {
  const std::size_t n = spec.size;
  const double s = double(n);
  signal::Image img{3, n, n, std::vector<float>(3 * n * n)};
  const double cx = 0.5 * s + drift_x, cy = 0.47 * s + drift_y;
  const double mx = lip.x + 0.5 * lip.w + drift_x + lip_dx, my = lip.y + 0.5 * lip.h + drift_y + lip_dy;
  const double lip_rx = 0.45 * lip.w, lip_ry = 0.14 * lip.h + aperture * 0.30 * lip.h;
  const double open_rx = 0.33 * lip.w, open_ry = aperture * 0.27 * lip.h;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = l.bg[c] + l.bg_grad[c] * (py / s - 0.5);
      const double face = smoothstep_edge(ellipse_sd(px, py, cx, cy, 0.36 * s, 0.44 * s));
      double tex = 0;
      for (int i = 0; i < 4; ++i) tex += l.tex_amp[i] * std::sin(l.tex_kx[i] * (px - cx) + l.tex_ky[i] * (py - cy) + l.tex_ph[i]);
      for (int c = 0; c < 3; ++c) rgb[c] += face * (l.skin[c] + tex - rgb[c]);
      for (double side : {-1.0, 1.0}) {
        const double eye = smoothstep_edge(ellipse_sd(px, py, cx + side * 0.15 * s, cy - 0.1 * s, 0.06 * s, 0.035 * s));
        for (int c = 0; c < 3; ++c) rgb[c] += eye * (0.08 - rgb[c]);
      }
      const double lips = smoothstep_edge(ellipse_sd(px, py, mx, my, lip_rx, lip_ry));
      for (int c = 0; c < 3; ++c) rgb[c] += lips * (l.lip[c] - rgb[c]);
      if (open_ry > 0.05) {
        const double mouth = smoothstep_edge(ellipse_sd(px, py, mx, my, open_rx, open_ry));
        for (int c = 0; c < 3; ++c) rgb[c] += mouth * (0.05 - rgb[c]);
      }
      for (int c = 0; c < 3; ++c) img.pixels[(std::size_t(c) * n + y) * n + x] = float(std::clamp(rgb[c], 0.0, 1.0));
    }
  return img;
}

}  // namespace detail

/// Renders one clip. The same spec renders the same face, drift and audio
/// for both labels; a fake differs only by its fake-mode alteration.
inline SynthClip generate_clip(const SynthSpec& spec, int label, const std::string& id = "clip") {
  spec.validate();
  if (label != 0 && label != 1) throw std::invalid_argument("synth: label must be 0 or 1");
  std::mt19937_64 rng(splitmix64(spec.seed));
  const double duration = double(spec.frames) / spec.fps;
  const detail::Look look = detail::random_look(rng);
  const Envelope voice(rng, duration);
  std::uniform_real_distribution<double> u(0, 1);
  const double carrier = spec.carrier_lo + (spec.carrier_hi - spec.carrier_lo) * u(rng);
  const double phase = 2 * std::numbers::pi * u(rng);

  // Fake-only randomness comes from its own stream so a fake and its real
  // twin share everything else.
  std::mt19937_64 fake_rng(splitmix64(spec.seed ^ 0xfa4eull));
  const Envelope other(fake_rng, duration);
  const bool desync = label == 1 && spec.mode != FakeMode::jitter;
  const bool jitter = label == 1 && spec.mode != FakeMode::desync;
  std::uniform_real_distribution<double> shake(-spec.jitter_px, spec.jitter_px);

  SynthClip out;
  out.clip.id = id;
  out.clip.label = label;
  out.clip.fps = spec.fps;
  const Rect lip = spec.lip_region();
  auto& tr = out.trace;
  for (std::size_t k = 0; k < spec.frames; ++k) {
    const double t = (double(k) + 0.5) / spec.fps;
    tr.audio_envelope.push_back(voice(t));
    tr.aperture.push_back(desync ? other(t) : voice(t));
    tr.lip_dx.push_back(jitter ? shake(fake_rng) : 0.0);
    tr.lip_dy.push_back(jitter ? shake(fake_rng) : 0.0);
    tr.drift_x.push_back(look.drift_amp[0] * std::sin(2 * std::numbers::pi * look.drift_freq[0] * t + look.drift_ph[0]));
    tr.drift_y.push_back(look.drift_amp[1] * std::sin(2 * std::numbers::pi * look.drift_freq[1] * t + look.drift_ph[1]));
    out.clip.frames.push_back(detail::render(spec, look, lip, tr.drift_x[k], tr.drift_y[k], tr.lip_dx[k], tr.lip_dy[k], tr.aperture[k]));
  }

  std::normal_distribution<double> hiss(0.0, 0.003);
  std::mt19937_64 audio_rng(splitmix64(spec.seed ^ 0xa0d10ull));
  const auto n_samples = static_cast<std::size_t>(std::lround(duration * spec.sample_rate));
  out.clip.audio.sample_rate = spec.sample_rate;
  out.clip.audio.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = double(i) / spec.sample_rate;
    const double w = 2 * std::numbers::pi * carrier * t + phase;
    const double tone = (std::sin(w) + 0.5 * std::sin(2 * w) + 0.25 * std::sin(3 * w)) / 1.75;
    out.clip.audio.samples[i] = 0.6 * voice(t) * tone + hiss(audio_rng);
  }
  return out;
}

inline void write_clip(const std::filesystem::path& dir, const io::Clip& clip) {
  io::save_frames(dir / "frames", clip.frames);
  io::write_wav((dir / "audio.wav").string(), clip.audio);
}

/// Clip index -> split with per-label 60/20/20 stratification: within each
/// label, floor(20%) go to val, floor(20%) to test and the rest to train,
/// assigned by a seeded shuffle.
inline std::vector<io::Split> stratified_splits(const std::vector<int>& labels, std::uint64_t seed) {
  std::vector<io::Split> out(labels.size(), io::Split::train);
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) idx.push_back(i);
    std::mt19937_64 rng(splitmix64(seed ^ (0x5b117ull + std::uint64_t(label))));
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_val = idx.size() / 5, n_test = idx.size() / 5;
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = k < n_val ? io::Split::val : k < n_val + n_test ? io::Split::test : io::Split::train;
  }
  return out;
}

/// Writes n_real + n_fake clips under out_dir/clips/ and out_dir/manifest.tsv.
/// `base` supplies everything but the per-clip seed.
inline io::Manifest generate_dataset(std::size_t n_real, std::size_t n_fake, std::uint64_t seed, const std::filesystem::path& out_dir,
                                     SynthSpec base = {}) {
  if (n_real == 0 || n_fake == 0) throw std::invalid_argument("synth: need at least one real and one fake clip");
  base.validate();
  std::vector<int> labels(n_real, 0);
  labels.resize(n_real + n_fake, 1);
  const auto splits = stratified_splits(labels, seed);
  io::Manifest m;
  std::filesystem::create_directories(out_dir / "clips");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "clip%05zu", i);
    SynthSpec spec = base;
    spec.seed = clip_seed(seed, i);
    const auto sc = generate_clip(spec, labels[i], id);
    const auto dir = out_dir / "clips" / id;
    write_clip(dir, sc.clip);
    m.clips.push_back({id, dir / "frames", dir / "audio.wav", labels[i], splits[i]});
  }
  io::write_manifest((out_dir / "manifest.tsv").string(), m);
  return m;
}

}  // namespace ftfd::synth
