#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "dsfm/core.hpp"

namespace dsfm {

/// ROC AUC as the Mann-Whitney statistic with midranks for tied scores.
/// Returns nullopt when only one class is present.
inline std::optional<double> try_auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ShapeError("auc: labels and scores differ in length");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j share the midrank.
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

inline double auc(std::span<const int> labels, std::span<const double> scores) {
  if (auto a = try_auc(labels, scores)) return *a;
  throw ValueError("auc: undefined for single-class labels");
}

}  // namespace dsfm
