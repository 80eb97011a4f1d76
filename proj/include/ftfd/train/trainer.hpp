#pragma once

// Dataset loading, the minibatch training loop and split evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftfd/io/clip.hpp"
#include "ftfd/io/manifest.hpp"
#include "ftfd/nn/model.hpp"
#include "ftfd/train/adam.hpp"
#include "ftfd/train/metrics.hpp"

namespace ftfd::train {

/// Loads and preprocesses every clip of one split. Flows are computed only
/// when the motion stream needs them.
inline std::vector<nn::PreparedClip> load_split(const io::Manifest& manifest, io::Split split, bool with_flows,
                                                double fps = 25.0) {
  std::vector<nn::PreparedClip> out;
  for (const auto& rec : manifest.of(split)) out.push_back(nn::prepare_clip(io::load_clip(rec, fps), with_flows));
  return out;
}

struct EvalOptions {
  double threshold = 0.5;
  std::size_t segment = 25;
  std::size_t stride = 1;
  std::size_t batch = 32;
};

/// Per-clip segment reports for a split.
template <class T>
std::vector<nn::DetectionReport> score_clips(nn::FtfdNet<T>& net, std::span<const nn::PreparedClip> clips,
                                             const EvalOptions& opt = {}) {
  std::vector<nn::DetectionReport> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(nn::predict_segment(net, c, opt.threshold, opt.segment, opt.batch, opt.stride));
  return out;
}

template <class T>
EvalResult evaluate(nn::FtfdNet<T>& net, std::span<const nn::PreparedClip> clips, const EvalOptions& opt = {}) {
  if (clips.empty()) throw std::invalid_argument("evaluate: empty split");
  const auto reports = score_clips(net, clips, opt);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < clips.size(); ++i) scores.push_back(reports[i].score), labels.push_back(clips[i].label);
  return compute_metrics(scores, labels, opt.threshold);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  std::optional<EvalResult> val;

  /// One metric-log line: epoch, train_loss, val_acc, val_auc, val_logloss.
  std::string to_json_line() const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["train_loss"] = train_loss;
    j["val_acc"] = val ? nlohmann::json(val->acc) : nlohmann::json(nullptr);
    j["val_auc"] = val && val->auc ? nlohmann::json(*val->auc) : nlohmann::json(nullptr);
    j["val_logloss"] = val ? nlohmann::json(val->logloss) : nlohmann::json(nullptr);
    return j.dump();
  }
};

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::size_t patience = 0;  // stop after this many epochs without a better val LogLoss; 0 disables
  EvalOptions val;           // per-epoch validation scoring
  std::function<void(const EpochRecord&)> on_epoch;
};

template <class T>
struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  long steps = 0;
  io::Checkpoint<T> best;
};

/// Minibatch Adam on one random T+1-frame window per clip per epoch. The
/// checkpoint with the lowest val LogLoss (last epoch without a val split) is
/// kept and loaded back into `net` at the end.
template <class T>
TrainResult<T> fit(nn::FtfdNet<T>& net, std::span<const nn::PreparedClip> train_clips,
                   std::span<const nn::PreparedClip> val_clips, const TrainOptions& opt) {
  if (train_clips.empty()) throw std::invalid_argument("train: empty split");
  if (opt.batch == 0) throw std::invalid_argument("train: batch size must be positive");
  const std::size_t t = net.config().frames;
  for (const auto& c : train_clips)
    if (c.num_windows(t) == 0) throw std::invalid_argument("train: clip " + c.id + " is shorter than T+1 frames");

  std::mt19937_64 rng(opt.seed ^ 0x7a11u);
  OptimState<T> st;
  st.lr = opt.lr;
  TrainResult<T> res;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_clips.size());

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<nn::WindowRef> windows;
    for (std::size_t i : order) {
      const auto& c = train_clips[i];
      std::uniform_int_distribution<std::size_t> pick(0, c.num_windows(t) - 1);
      windows.push_back({&c, pick(rng)});
    }
    double loss_sum = 0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < windows.size(); b += opt.batch) {
      const std::size_t n = std::min(opt.batch, windows.size() - b);
      if (n < 2) break;  // batch norm needs two samples
      const auto in = nn::assemble_batch<T>(net.config(), std::span<const nn::WindowRef>(windows).subspan(b, n));
      net.store().zero_grad();
      const auto loss = nn::logloss(net.forward(in, Mode::train), in.labels);
      const double l = double(loss.item());
      if (!std::isfinite(l)) {
        throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(res.steps + 1));
      }
      backward(loss);
      adam_step(net.store().params(), st);
      ++res.steps;
      loss_sum += l * double(n);
      seen += n;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(std::max<std::size_t>(seen, 1));
    if (!val_clips.empty()) rec.val = evaluate(net, val_clips, opt.val);
    res.log.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);

    const double score = rec.val ? rec.val->logloss : -double(epoch);
    if (score < best_loss) {
      best_loss = score;
      res.best_epoch = epoch;
      res.best = net.checkpoint(std::uint64_t(res.steps));
      stale = 0;
    } else if (opt.patience && ++stale >= opt.patience) {
      break;
    }
  }
  net.load(res.best);
  net.store().zero_grad();
  return res;
}

}  // namespace ftfd::train
