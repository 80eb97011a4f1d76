#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "ftfd/signal/fft.hpp"
#include "ftfd/signal/mfcc.hpp"
#include "ftfd/signal/prep.hpp"
#include "flow_oracle.hpp"

using namespace ftfd::signal;
using oracle::interior_epe;
using oracle::periodic_texture;

namespace {

std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = -2.0 * std::numbers::pi * double((k * i) % n) / double(n);
      acc += x[i] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

// Log mel energies written out longhand: explicit frames, direct DFT, filter
// weights from the triangle definition in Hz.
std::vector<double> reference_log_mel(const std::vector<double>& audio, double sr) {
  const std::size_t frame = 400, hop = 160, mels = 26;
  std::vector<double> pre(audio.size());
  for (std::size_t i = 0; i < audio.size(); ++i) pre[i] = audio[i] - (i > 0 ? 0.97 * audio[i - 1] : 0.0);
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> out;
  for (std::size_t t = 0; t < audio.size() / hop; ++t) {
    std::vector<double> buf(frame, 0.0);
    for (std::size_t i = 0; i < frame; ++i) {
      if (t * hop + i < pre.size()) {
        buf[i] = pre[t * hop + i] * (0.54 - 0.46 * std::cos(2 * std::numbers::pi * double(i) / double(frame - 1)));
      }
    }
    const auto spec = direct_dft(buf);
    for (std::size_t m = 0; m < mels; ++m) {
      const double lo = hz(mel(sr / 2) * double(m) / 27.0);
      const double mid = hz(mel(sr / 2) * double(m + 1) / 27.0);
      const double hi = hz(mel(sr / 2) * double(m + 2) / 27.0);
      double e = 0;
      for (std::size_t k = 0; k <= frame / 2; ++k) {
        const double f = double(k) * sr / double(frame);
        double w = 0;
        if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
        if (f > mid && f < hi) w = (hi - f) / (hi - mid);
        e += w * std::abs(spec[k]);
      }
      out.push_back(std::log(std::max(e, 1e-10)));
    }
  }
  return out;
}

// Smooth texture periodic on the grid, so wrapped shifts are exact.
Image gray_to_image(const GrayImage& g) {
  Image img{1, g.height, g.width, std::vector<float>(g.pixels.size())};
  for (std::size_t i = 0; i < g.pixels.size(); ++i) img.pixels[i] = float(g.pixels[i]);
  return img;
}

Image random_image(std::size_t c, std::size_t h, std::size_t w, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0, 1);
  Image img{c, h, w, std::vector<float>(c * h * w)};
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

}  // namespace

TEST(Fft, MatchesDirectDftForMixedLengths) {
  for (std::size_t n : {1u, 2u, 7u, 12u, 97u, 400u, 510u}) {
    std::mt19937 rng{static_cast<unsigned>(n)};
    std::normal_distribution<double> g;
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng);
    const auto fast = Fft(n).forward_real(x);
    const auto slow = direct_dft(x);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(std::abs(fast[k] - slow[k]), 0.0, 1e-9) << "n=" << n << " k=" << k;
  }
}

TEST(Mfcc, SilenceHitsLogFloorEverywhere) {
  const std::vector<double> zeros(2560, 0.0);
  const auto log_mel = log_mel_energies(zeros, 16000);
  for (double v : log_mel) EXPECT_DOUBLE_EQ(v, std::log(1e-10));
  const auto s = compute_mfcc(zeros, 16000);
  for (double v : s.values) EXPECT_TRUE(std::isfinite(v));
}

TEST(Mfcc, ShapeForFourFrameWindow) {
  std::vector<double> audio(2560);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = std::sin(0.05 * double(i));
  const auto s = compute_mfcc(audio, 16000);
  EXPECT_EQ(s.n_coeffs, 13u);
  EXPECT_EQ(s.n_steps, 16u);
  EXPECT_EQ(s.values.size(), 13u * 16u);
}

TEST(Mfcc, DctOfConstantKeepsOnlyDc) {
  const std::vector<double> flat(26, -3.25);
  const auto c = dct2(flat, 13);
  EXPECT_NEAR(c[0], -3.25 * std::sqrt(26.0), 1e-12);
  for (std::size_t k = 1; k < 13; ++k) EXPECT_LT(std::abs(c[k]), 1e-9);
}

TEST(Mfcc, SineMelEnergiesMatchDirectDftOracle) {
  std::vector<double> audio(2560);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = 0.5 * std::sin(2 * std::numbers::pi * 440.0 * double(i) / 16000.0);
  const auto got = log_mel_energies(audio, 16000);
  const auto want = reference_log_mel(audio, 16000);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-8) << i;
}

TEST(Mfcc, RejectsEmptyAndShortAudio) {
  EXPECT_THROW(compute_mfcc(std::vector<double>{}, 16000), std::invalid_argument);
  EXPECT_THROW(compute_mfcc(std::vector<double>(100, 0.1), 16000), std::invalid_argument);
  EXPECT_THROW(compute_mfcc(std::vector<double>(2560, 0.1), 0), std::invalid_argument);
}

TEST(Mfcc, FiniteForArbitraryFiniteAudio) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> audio(400 + rng() % 4000);
    for (auto& v : audio) v = (trial % 3 == 0) ? 0.0 : u(rng) * (trial % 2 ? 1e-6 : 1.0);
    for (double v : compute_mfcc(audio, 16000).values) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Farneback, IdenticalFramesGiveNoMotion) {
  const auto img = periodic_texture(64, 64, 1);
  const auto f = farneback_flow(img, img);
  for (std::size_t y = 0; y < f.height; ++y)
    for (std::size_t x = 0; x < f.width; ++x) ASSERT_LT(std::hypot(f.dx(y, x), f.dy(y, x)), 0.05);
}

TEST(Farneback, RecoversWrappedTranslation) {
  const auto a = periodic_texture(112, 112, 5);
  const auto b = periodic_texture(112, 112, 5, 2.0, 1.0);
  const auto f = farneback_flow(a, b);
  EXPECT_LT(interior_epe(f, 2.0, 1.0), 0.5);
}

TEST(Farneback, AntisymmetricOnTranslations) {
  for (unsigned seed : {2u, 9u}) {
    const auto a = periodic_texture(64, 64, seed);
    const auto b = periodic_texture(64, 64, seed, -1.5, 0.5);
    const auto fwd = farneback_flow(a, b);
    const auto bwd = farneback_flow(b, a);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t y = 5; y < 59; ++y)
      for (std::size_t x = 5; x < 59; ++x, ++n) sum += std::hypot(fwd.dx(y, x) + bwd.dx(y, x), fwd.dy(y, x) + bwd.dy(y, x));
    EXPECT_LT(sum / double(n), 0.5) << "seed " << seed;
  }
}

TEST(Farneback, FlowIsBoundedAndFinite) {
  GrayImage a{40, 40, std::vector<double>(1600)}, b = a;
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : a.pixels) v = u(rng);
  for (auto& v : b.pixels) v = u(rng);
  const auto f = farneback_flow(a, b);
  const double diag = std::hypot(40.0, 40.0);
  for (double v : f.values) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_LE(std::abs(v), diag);
  }
}

TEST(Farneback, RejectsTinyOrMismatchedFrames) {
  const GrayImage tiny{8, 8, std::vector<double>(64, 0.5)};
  EXPECT_THROW(farneback_flow(tiny, tiny), std::invalid_argument);
  const GrayImage a{32, 32, std::vector<double>(1024, 0.5)}, b{32, 30, std::vector<double>(960, 0.5)};
  EXPECT_THROW(farneback_flow(a, b), std::invalid_argument);
}

TEST(Farneback, FullResolutionPairIsFast) {
  const auto a = periodic_texture(112, 112, 4);
  const auto b = periodic_texture(112, 112, 4, 1.0, 0.0);
  const auto t0 = std::chrono::steady_clock::now();
  (void)farneback_flow(a, b);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 10.0);
}

TEST(Prep, LumaWeights) {
  Image rgb{3, 1, 1, {1.0f, 0.0f, 0.0f}};
  EXPECT_NEAR(to_gray(rgb).pixels[0], 0.299, 1e-7);
  rgb.pixels = {0.0f, 1.0f, 0.0f};
  EXPECT_NEAR(to_gray(rgb).pixels[0], 0.587, 1e-7);
  rgb.pixels = {0.0f, 0.0f, 1.0f};
  EXPECT_NEAR(to_gray(rgb).pixels[0], 0.114, 1e-7);
}

TEST(Prep, StackFramesShapeAndLayout) {
  FrameWindow w;
  for (unsigned i = 0; i < 5; ++i) w.frames.push_back(random_image(3, 112, 112, i));
  const auto s = stack_frames<float>(w, 4);
  EXPECT_EQ(s.shape(), (ftfd::Shape{12, 112, 112}));
  // Channel 3 is frame 1, channel 0.
  EXPECT_EQ(s[3 * 112 * 112 + 5], w.frames[1].pixels[5]);
}

TEST(Prep, SingleFrameStackIsTheFrame) {
  FrameWindow w{{random_image(3, 16, 16, 7)}, 25.0, 0};
  const auto s = stack_frames<float>(w, 1);
  EXPECT_EQ(s.shape(), (ftfd::Shape{3, 16, 16}));
  for (std::size_t i = 0; i < s.size(); ++i) ASSERT_EQ(s[i], w.frames[0].pixels[i]);
}

TEST(Prep, StackFramesRoundtripIsExact) {
  FrameWindow w;
  for (unsigned i = 0; i < 4; ++i) w.frames.push_back(random_image(3, 9, 7, 20 + i));
  const auto back = unstack_frames(stack_frames<float>(w, 4), 3);
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back[i], w.frames[i]);
  const auto back_d = unstack_frames(stack_frames<double>(w, 4), 3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back_d[i], w.frames[i]);
}

TEST(Prep, StackRejectsShortWindows) {
  FrameWindow w;
  for (unsigned i = 0; i < 4; ++i) w.frames.push_back(random_image(1, 16, 16, i));
  EXPECT_THROW(stack_frames<float>(w, 5), std::invalid_argument);
  EXPECT_THROW(stack_flows<float>(w, 4), std::invalid_argument);
}

TEST(Prep, StackFlowsShapeAndStaticClip) {
  FrameWindow w;
  const auto still = gray_to_image(periodic_texture(112, 112, 8));
  for (int i = 0; i < 5; ++i) w.frames.push_back(still);
  const auto s = stack_flows<float>(w, 4);
  EXPECT_EQ(s.shape(), (ftfd::Shape{8, 112, 112}));
  const std::size_t plane = 112 * 112;
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t i = 0; i < plane; ++i) {
      ASSERT_LT(std::hypot(s[(2 * f) * plane + i], s[(2 * f + 1) * plane + i]), 0.05f);
    }
}

TEST(Prep, ConstantVelocityGivesEqualFlows) {
  FrameWindow w;
  for (int i = 0; i < 4; ++i) w.frames.push_back(gray_to_image(periodic_texture(48, 48, 12, 1.0 * i, 0.5 * i)));
  const auto flows = unstack_flows(stack_flows<double>(w, 3));
  ASSERT_EQ(flows.size(), 3u);
  for (const auto& f : flows) EXPECT_LT(interior_epe(f, 1.0, 0.5), 0.5);
  for (std::size_t k = 1; k < 3; ++k) {
    double diff = 0;
    for (std::size_t i = 0; i < flows[0].values.size(); ++i) diff += std::abs(flows[k].values[i] - flows[0].values[i]);
    EXPECT_LT(diff / double(flows[0].values.size()), 0.1);
  }
}

TEST(Prep, FlowStackRoundtrip) {
  std::vector<FlowField> flows(3, FlowField{5, 6, std::vector<double>(60)});
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-3, 3);
  for (auto& f : flows)
    for (auto& v : f.values) v = u(rng);  // float-representable
  const auto back = unstack_flows(stack_flow_fields<float>(flows));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(back[k].values, flows[k].values);
}

TEST(Prep, AudioWindowLength) {
  const std::vector<double> audio(16000, 0.25);
  FrameWindow w{{}, 25.0, 10};
  EXPECT_EQ(align_audio_window(audio, 16000, w, 4).size(), 2560u);
}

TEST(Prep, AudioWindowPadsBeforeStart) {
  std::vector<double> audio(4000);
  for (std::size_t i = 0; i < audio.size(); ++i) audio[i] = double(i + 1);
  const auto a = align_audio_window(audio, 16000, -1, 4, 25.0);
  ASSERT_EQ(a.size(), 2560u);
  for (std::size_t i = 0; i < 640; ++i) ASSERT_EQ(a[i], 0.0);
  for (std::size_t i = 640; i < 2560; ++i) ASSERT_EQ(a[i], audio[i - 640]);
  const auto tail = align_audio_window(audio, 16000, 5, 4, 25.0);
  for (std::size_t i = 0; i < 800; ++i) ASSERT_EQ(tail[i], audio[3200 + i]);
  for (std::size_t i = 800; i < 2560; ++i) ASSERT_EQ(tail[i], 0.0);
}

TEST(Prep, AudioWindowReembedsOriginal) {
  std::vector<double> audio(16000);
  std::mt19937 rng(4);
  std::normal_distribution<double> g;
  for (auto& v : audio) v = g(rng);
  std::vector<double> rebuilt(audio.size(), 0.0);
  for (long start = 0; start < 25; start += 4) {
    const auto span = audio_span(start, 4, 16000, 25.0);
    const auto slice = align_audio_window(audio, 16000, start, 4, 25.0);
    for (std::size_t i = 0; i < slice.size(); ++i)
      if (span.begin + long(i) < long(audio.size())) rebuilt[std::size_t(span.begin) + i] = slice[i];
  }
  EXPECT_EQ(rebuilt, audio);
}

TEST(Prep, AudioWindowOutsideRecordingRejected) {
  const std::vector<double> audio(1000, 0.1);
  EXPECT_THROW(align_audio_window(audio, 16000, 10, 4, 25.0), std::invalid_argument);
  EXPECT_THROW(align_audio_window(audio, 16000, -4, 4, 25.0), std::invalid_argument);
}
