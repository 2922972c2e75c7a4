#pragma once

#include <cstdint>
#include <vector>

// Deliberately naive reference implementations for metric tests.
namespace escape::testing {

/// AP by definition: for each positive, count the items ranked at or above
/// it (strictly higher score, or equal score and earlier index) and the
/// positives among them.
inline double brute_force_ap(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  const std::size_t n = scores.size();
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels[i]) continue;
    ++positives;
    std::size_t rank = 0, hits = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const bool above = scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
      if (!above) continue;
      ++rank;
      if (labels[j]) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return positives ? total / static_cast<double>(positives) : -1.0;
}

/// F1 from an explicit 2x2 confusion matrix.
inline double brute_force_f1(const std::vector<std::uint8_t>& predicted, const std::vector<std::uint8_t>& labels) {
  std::size_t confusion[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < labels.size(); ++i) ++confusion[predicted[i] ? 1 : 0][labels[i] ? 1 : 0];
  const double tp = static_cast<double>(confusion[1][1]);
  const double fp = static_cast<double>(confusion[1][0]);
  const double fn = static_cast<double>(confusion[0][1]);
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace escape::testing
