#pragma once

// Detection metrics over per-clip scores (probability of "fake"): accuracy,
// rank-statistic AUC and clamped LogLoss.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ftfd::train {

struct EvalResult {
  double acc = 0;              // percent
  std::optional<double> auc;   // percent; absent for single-class splits
  double logloss = 0;
  std::size_t n = 0;
};

namespace detail {

inline void check_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("metrics: scores and labels differ in length");
  if (scores.empty()) throw std::invalid_argument("metrics: empty split");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("metrics: labels must be 0 or 1");
}

}  // namespace detail

/// Percentage of clips whose verdict (score >= threshold means fake) matches the label.
inline double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  detail::check_scores(scores, labels);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += (scores[i] >= threshold) == (labels[i] == 1);
  return 100.0 * double(hit) / double(scores.size());
}

/// Mann-Whitney AUC with midranks for ties: P(fake > real) + 0.5 P(tie), in
/// percent. Rank sums are multiples of 0.5, so the statistic is exact.
inline std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scores(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = double(i + 1 + j) / 2.0;  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += midrank, ++pos;
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double u = rank_sum - double(pos) * double(pos + 1) / 2.0;
  return 100.0 * u / double(pos * neg);
}

/// Mean binary cross-entropy over scores clamped to [clamp, 1 - clamp].
inline double logloss(std::span<const double> scores, std::span<const int> labels, double clamp = 1e-7) {
  detail::check_scores(scores, labels);
  double total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::clamp(scores[i], clamp, 1.0 - clamp);
    total -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / double(scores.size());
}

inline EvalResult compute_metrics(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  return {accuracy(scores, labels, threshold), auc(scores, labels), logloss(scores, labels), scores.size()};
}

}  // namespace ftfd::train
