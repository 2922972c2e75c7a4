#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "escape/core/error.hpp"
#include "escape/core/rng.hpp"
#include "escape/corpus/records.hpp"

namespace escape::corpus {

/// Fractions for (fold1, fold2, test).
using SplitFractions = std::array<double, 3>;

inline constexpr std::size_t kStrata = kNumClasses + 1;  // five classes plus the Non-AMP group
inline constexpr std::array<Fold, 3> kSplitFolds = {Fold::kFold1, Fold::kFold2, Fold::kTest};

/// Strata a record belongs to: its set classes, or the Non-AMP group.
inline std::vector<std::size_t> strata_of(const LabelVector& labels) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (labels[c]) out.push_back(c);
  if (out.empty()) out.push_back(kNumClasses);
  return out;
}

inline void check_fractions(const SplitFractions& f) {
  double total = 0;
  for (double v : f) {
    if (!(v >= 0.0)) throw Error(ErrorCode::kUsage, "split fractions must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::kUsage, "split fractions must sum to 1");
}

/// Greedy iterative stratification: repeatedly take the stratum with the
/// fewest unassigned records and place each of its records in the fold that
/// still wants the most of that stratum (ties: fold wanting the most records,
/// then a seeded random pick). Record visiting order is a seeded shuffle.
///
/// Throws InfeasibleSplit when a stratum has positives but fewer than the
/// number of non-empty folds.
inline std::vector<PeptideRecord> stratified_split(std::vector<PeptideRecord> records, const SplitFractions& fractions,
                                                   std::uint64_t seed) {
  check_fractions(fractions);
  if (records.empty()) throw Error(ErrorCode::kUsage, "cannot split an empty corpus");
  const std::size_t active_folds =
      static_cast<std::size_t>(std::count_if(fractions.begin(), fractions.end(), [](double f) { return f > 0; }));

  const std::size_t n = records.size();
  std::vector<std::vector<std::size_t>> strata(n);
  std::array<std::size_t, kStrata> totals{};
  for (std::size_t i = 0; i < n; ++i) {
    strata[i] = strata_of(records[i].labels);
    for (auto s : strata[i]) ++totals[s];
  }
  for (std::size_t s = 0; s < kStrata; ++s)
    if (totals[s] > 0 && totals[s] < active_folds)
      throw Error(ErrorCode::kInfeasibleSplit,
                  std::string(s < kNumClasses ? kClassNames[s] : kNonAmpName) + " has " + std::to_string(totals[s]) +
                      " positives for " + std::to_string(active_folds) + " folds");

  std::array<std::array<double, 3>, kStrata> wanted{};
  std::array<double, 3> wanted_total{};
  for (std::size_t f = 0; f < 3; ++f) {
    wanted_total[f] = fractions[f] * static_cast<double>(n);
    for (std::size_t s = 0; s < kStrata; ++s) wanted[s][f] = fractions[f] * static_cast<double>(totals[s]);
  }

  CounterRng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::array<std::vector<std::size_t>, kStrata> members;
  for (auto i : order)
    for (auto s : strata[i]) members[s].push_back(i);

  std::vector<bool> assigned(n, false);
  std::array<std::size_t, kStrata> remaining = totals;
  std::size_t left = n;
  while (left > 0) {
    std::size_t pick = kStrata;
    for (std::size_t s = 0; s < kStrata; ++s)
      if (remaining[s] > 0 && (pick == kStrata || remaining[s] < remaining[pick])) pick = s;
    for (auto i : members[pick]) {
      if (assigned[i]) continue;
      std::array<std::size_t, 3> candidates{};
      std::size_t count = 0;
      for (std::size_t f = 0; f < 3; ++f) {
        if (fractions[f] <= 0) continue;
        if (count == 0) {
          candidates[count++] = f;
          continue;
        }
        const std::size_t best = candidates[0];
        const double a = wanted[pick][f], b = wanted[pick][best];
        if (a > b || (a == b && wanted_total[f] > wanted_total[best])) {
          count = 0;
          candidates[count++] = f;
        } else if (a == b && wanted_total[f] == wanted_total[best]) {
          candidates[count++] = f;
        }
      }
      const std::size_t fold = candidates[count == 1 ? 0 : rng.below(count)];
      records[i].fold = kSplitFolds[fold];
      assigned[i] = true;
      --left;
      wanted_total[fold] -= 1.0;
      for (auto s : strata[i]) {
        wanted[s][fold] -= 1.0;
        --remaining[s];
      }
    }
  }
  return records;
}

struct PrevalenceRow {
  Fold fold;
  std::size_t size = 0;
  std::array<double, kStrata> prevalence{};
};

/// Per-fold prevalence of each stratum plus the global row (fold = kUnassigned).
inline std::vector<PrevalenceRow> prevalence_table(const std::vector<PeptideRecord>& records) {
  std::vector<PrevalenceRow> rows;
  auto row_for = [&](std::optional<Fold> fold) {
    PrevalenceRow row{fold.value_or(Fold::kUnassigned)};
    std::array<std::size_t, kStrata> counts{};
    for (const auto& r : records) {
      if (fold && r.fold != *fold) continue;
      ++row.size;
      for (auto s : strata_of(r.labels)) ++counts[s];
    }
    for (std::size_t s = 0; s < kStrata; ++s)
      row.prevalence[s] = row.size ? static_cast<double>(counts[s]) / static_cast<double>(row.size) : 0.0;
    return row;
  };
  rows.push_back(row_for(std::nullopt));
  for (auto f : kSplitFolds) rows.push_back(row_for(f));
  return rows;
}

/// Largest |fold prevalence - global prevalence| over non-empty folds and strata.
inline double max_prevalence_deviation(const std::vector<PeptideRecord>& records) {
  const auto rows = prevalence_table(records);
  double worst = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size == 0) continue;
    for (std::size_t s = 0; s < kStrata; ++s) worst = std::max(worst, std::abs(rows[r].prevalence[s] - rows[0].prevalence[s]));
  }
  return worst;
}

}  // namespace escape::corpus
