#pragma once

// Finite-difference check of every weight gradient of a miniature model.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "ftfd/nn/model.hpp"

namespace ftfd::train {

struct GradCheckOptions {
  bool dropout = true;      // train-mode dropout with its mask frozen across evaluations
  bool zero_input = false;  // all-zero frames, flows and MFCC
  double step = 1e-5;
  double floor = 1e-6;      // relative error scale is max(|analytic|, |numeric|, floor); FD round-off dominates below it
  std::size_t batch = 3;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst;  // "weight[index]"
  double worst_analytic = 0, worst_numeric = 0;
  std::size_t checked = 0;
  std::size_t weights = 0;
  bool finite = true;
  double seconds = 0;
  nn::ModelConfig config;
};

/// The base config shrunk to 8x8 inputs, two blocks of widths 4/8 (three when
/// the fusion strategy consumes three) and a small classifier.
inline nn::ModelConfig miniature(nn::ModelConfig cfg) {
  cfg.input_size = 8;
  const std::size_t blocks = std::max<std::size_t>(2, cfg.consumed_blocks());
  cfg.encoder.widths = blocks == 2 ? std::vector<std::size_t>{4, 8} : std::vector<std::size_t>{4, 8, 8};
  cfg.encoder.convs.assign(blocks, 1);
  cfg.classifier = {8, 4};
  if (blocks == 3) cfg.input_size = 16;
  cfg.validate();
  return cfg;
}

inline GradCheckReport grad_check(const nn::ModelConfig& base, std::uint64_t seed, const GradCheckOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport rep;
  rep.config = miniature(base);
  if (!opt.dropout) rep.config.dropout = 0;
  const auto& cfg = rep.config;
  nn::FtfdNet<double> net(cfg, seed);

  // Random affine parameters keep activations away from ReLU kinks even for
  // degenerate inputs.
  std::mt19937_64 rng(seed ^ 0x6c3du);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto& [name, w] : net.store().params()) {
    const double offset = ends_with(name, ".gamma") || ends_with(name, ".gamma.bias") ? 1.0 : 0.0;
    if (ends_with(name, ".bias") || ends_with(name, ".gamma") || ends_with(name, ".beta"))
      for (auto& x : w.mutable_data()) x = offset + u(rng);
  }

  const std::size_t n = opt.batch, s = cfg.input_size;
  nn::ModelInputs<double> in;
  auto fill = [&](const Shape& shape) {
    std::vector<double> v(numel(shape));
    if (!opt.zero_input)
      for (auto& x : v) x = 2 * u(rng);
    return Tensor<double>::from(shape, std::move(v));
  };
  if (cfg.modalities.visual) in.frames = fill({n, cfg.frames * cfg.channels, s, s});
  if (cfg.modalities.motion) in.flows = fill({n, cfg.frames * 2, s, s});
  if (cfg.modalities.audio) in.mfcc = fill({n, 1, cfg.mfcc_coeffs, cfg.mfcc_steps()});
  for (std::size_t i = 0; i < n; ++i) in.labels.push_back(double(i % 2));

  const auto mask_state = net.dropout_rng();
  auto loss_fn = [&] {
    net.dropout_rng() = mask_state;
    return nn::logloss(net.forward(in, Mode::train), in.labels);
  };

  net.store().zero_grad();
  backward(loss_fn());
  for (auto& [name, w] : net.store().params()) {
    const auto analytic = w.grad();
    auto values = w.mutable_data();
    ++rep.weights;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double up, down;
      {
        NoGradGuard no_grad;
        values[i] = saved + opt.step;
        up = loss_fn().item();
        values[i] = saved - opt.step;
        down = loss_fn().item();
      }
      values[i] = saved;
      const double numeric = (up - down) / (2 * opt.step);
      if (!std::isfinite(analytic[i]) || !std::isfinite(numeric)) rep.finite = false;
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
      const double err = std::abs(analytic[i] - numeric) / scale;
      ++rep.checked;
      if (!(err <= rep.max_rel_error)) {
        rep.max_rel_error = err;
        rep.worst = name + "[" + std::to_string(i) + "]";
        rep.worst_analytic = analytic[i];
        rep.worst_numeric = numeric;
      }
    }
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace ftfd::train
