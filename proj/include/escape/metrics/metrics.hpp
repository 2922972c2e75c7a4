#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "escape/core/error.hpp"
#include "escape/corpus/records.hpp"

namespace escape::metrics {

using corpus::kNumClasses;
using ClassScores = std::array<double, kNumClasses>;

enum class ScoreKind { kLogit, kProbability };

constexpr std::string_view to_string(ScoreKind k) { return k == ScoreKind::kLogit ? "logit" : "probability"; }

inline ScoreKind parse_score_kind(std::string_view s) {
  if (s == "logit") return ScoreKind::kLogit;
  if (s == "probability") return ScoreKind::kProbability;
  throw Error(ErrorCode::kUsage, "unknown score kind '" + std::string(s) + "' (logit, probability)");
}

/// How fold models are combined: mean of logits (default) or mean of
/// per-model probabilities.
enum class EnsembleRule { kLogit, kProbability };

constexpr std::string_view to_string(EnsembleRule r) { return r == EnsembleRule::kLogit ? "logit" : "probability"; }

inline EnsembleRule parse_ensemble_rule(std::string_view s) {
  if (s == "logit") return EnsembleRule::kLogit;
  if (s == "probability") return EnsembleRule::kProbability;
  throw Error(ErrorCode::kUsage, "unknown ensemble rule '" + std::string(s) + "' (logit, probability)");
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct PredictionSet {
  std::vector<std::string> ids;
  std::vector<ClassScores> scores;
  std::vector<corpus::LabelVector> labels;  // may be empty when unlabeled
  ScoreKind kind = ScoreKind::kLogit;

  std::size_t size() const { return ids.size(); }

  void validate() const {
    if (scores.size() != ids.size() || (!labels.empty() && labels.size() != ids.size()))
      throw Error(ErrorCode::kShapeMismatch, "prediction set: ids, scores and labels differ in length");
    std::set<std::string_view> seen;
    for (const auto& id : ids)
      if (!seen.insert(id).second) throw Error(ErrorCode::kIdMismatch, "duplicate prediction id " + id);
  }

  double probability(std::size_t row, std::size_t c) const {
    return kind == ScoreKind::kLogit ? sigmoid(scores[row][c]) : scores[row][c];
  }
};

/// Average precision of one class: rank by score descending (ties keep input
/// order) and average precision@k over the ranks k holding a positive.
/// Throws NoPositives when no label is set.
inline double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kShapeMismatch, "average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!labels[order[k]]) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) throw Error(ErrorCode::kNoPositives, "average precision is undefined without positives");
  return total / static_cast<double>(hits);
}

/// Per-class AP; classes without positives come back empty.
inline std::array<std::optional<double>, kNumClasses> class_average_precisions(const PredictionSet& set) {
  std::array<std::optional<double>, kNumClasses> out;
  std::vector<double> s(set.size());
  std::vector<std::uint8_t> l(set.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    bool any = false;
    for (std::size_t i = 0; i < set.size(); ++i) {
      s[i] = set.scores[i][c];
      l[i] = set.labels[i].bits[c];
      any |= l[i] != 0;
    }
    if (any) out[c] = average_precision(s, l);
  }
  return out;
}

struct MeanAp {
  double value = 0.0;
  std::vector<std::size_t> excluded;  // classes without a defined AP
};

/// Unweighted mean over the defined per-class APs.
inline MeanAp mean_ap(std::span<const std::optional<double>> aps) {
  MeanAp out;
  double total = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < aps.size(); ++c) {
    if (!aps[c]) {
      out.excluded.push_back(c);
      continue;
    }
    total += *aps[c];
    ++defined;
  }
  if (defined == 0) throw Error(ErrorCode::kNoPositives, "mAP needs at least one class with positives");
  out.value = total / static_cast<double>(defined);
  return out;
}

inline double mean_ap(std::span<const double> aps) {
  if (aps.empty()) throw Error(ErrorCode::kNoPositives, "mAP of no classes");
  return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

struct F1Scores {
  ClassScores per_class{};
  double macro = 0.0;
};

/// F1 of a single binary decision vector; 0 when precision + recall is 0.
inline double f1_score(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> labels) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] && labels[i]) ++tp;
    if (predicted[i] && !labels[i]) ++fp;
    if (!predicted[i] && labels[i]) ++fn;
  }
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

/// Per-class and macro F1. A class is predicted when its probability is
/// >= threshold (logits go through the sigmoid first).
inline F1Scores f1_scores(const PredictionSet& set, double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::kUsage, "threshold must lie in (0, 1)");
  F1Scores out;
  std::vector<std::uint8_t> pred(set.size()), truth(set.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      pred[i] = set.probability(i, c) >= threshold ? 1 : 0;
      truth[i] = set.labels[i].bits[c];
    }
    out.per_class[c] = f1_score(pred, truth);
  }
  out.macro = std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) / static_cast<double>(kNumClasses);
  return out;
}

inline double macro_f1(std::span<const double> per_class) {
  if (per_class.empty()) throw Error(ErrorCode::kUsage, "macro F1 of no classes");
  return std::accumulate(per_class.begin(), per_class.end(), 0.0) / static_cast<double>(per_class.size());
}

/// Combines fold-model predictions over identical, identically ordered ids.
/// kLogit averages logits and yields logits; kProbability averages the
/// per-model probabilities and yields probabilities.
inline PredictionSet ensemble(const std::vector<PredictionSet>& models, EnsembleRule rule = EnsembleRule::kLogit) {
  if (models.empty()) throw Error(ErrorCode::kUsage, "ensemble of no models");
  for (const auto& m : models) {
    m.validate();
    if (m.ids != models.front().ids) throw Error(ErrorCode::kIdMismatch, "ensemble members disagree on record ids or order");
    if (rule == EnsembleRule::kLogit && m.kind != ScoreKind::kLogit)
      throw Error(ErrorCode::kUsage, "logit averaging needs logit scores");
  }
  PredictionSet out;
  out.ids = models.front().ids;
  out.labels = models.front().labels;
  out.kind = rule == EnsembleRule::kLogit ? ScoreKind::kLogit : ScoreKind::kProbability;
  out.scores.assign(out.ids.size(), ClassScores{});
  const double inv = 1.0 / static_cast<double>(models.size());
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      double total = 0.0;
      for (const auto& m : models) total += rule == EnsembleRule::kLogit ? m.scores[i][c] : m.probability(i, c);
      out.scores[i][c] = total * inv;
    }
  return out;
}

inline PredictionSet ensemble_logits(const std::vector<PredictionSet>& models) {
  return ensemble(models, EnsembleRule::kLogit);
}

/// Evaluation of one prediction set.
struct EvalReport {
  std::array<std::optional<double>, kNumClasses> ap;
  double map = 0.0;
  ClassScores f1{};
  double macro_f1 = 0.0;
  double threshold = 0.5;
  std::size_t records = 0;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::vector<std::string> warnings;
};

inline EvalReport evaluate(const PredictionSet& set, double threshold = 0.5) {
  set.validate();
  if (set.labels.size() != set.size()) throw Error(ErrorCode::kShapeMismatch, "evaluation needs labels for every record");
  if (set.size() == 0) throw Error(ErrorCode::kEmptyFold, "nothing to evaluate");
  EvalReport r;
  r.records = set.size();
  r.threshold = threshold;
  r.ap = class_average_precisions(set);
  const auto m = mean_ap(r.ap);
  r.map = m.value;
  for (auto c : m.excluded)
    r.warnings.push_back(std::string(corpus::kClassNames[c]) + " has no positives; excluded from mAP");
  const auto f1 = f1_scores(set, threshold);
  r.f1 = f1.per_class;
  r.macro_f1 = f1.macro;
  return r;
}

struct MeanStd {
  double mean = 0.0;
  std::optional<double> std;  // sample std; empty for fewer than 2 values
  std::size_t count = 0;
};

inline MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  // Offsets from the first value keep identical inputs exact (std 0).
  double offset = 0.0;
  for (double v : values) offset += v - values.front();
  out.mean = values.front() + offset / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

/// Metric name -> mean and sample standard deviation across seed reports.
/// Names: "mAP", "macro_f1", "ap.<class>", "f1.<class>".
struct SeedAggregate {
  std::vector<std::uint64_t> seeds;
  std::map<std::string, MeanStd> metrics;
};

inline SeedAggregate aggregate_seeds(const std::vector<EvalReport>& reports) {
  if (reports.size() < 2) throw Error(ErrorCode::kUsage, "seed aggregation needs at least two reports");
  SeedAggregate out;
  std::map<std::string, std::vector<double>> values;
  // Sorting by seed keeps the summation order, and so the bits, independent of input order.
  std::vector<const EvalReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const EvalReport* a, const EvalReport* b) { return a->seed.value_or(0) < b->seed.value_or(0); });
  for (const auto* r : sorted) {
    if (r->seed) out.seeds.push_back(*r->seed);
    values["mAP"].push_back(r->map);
    values["macro_f1"].push_back(r->macro_f1);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const std::string name(corpus::kClassNames[c]);
      if (r->ap[c]) values["ap." + name].push_back(*r->ap[c]);
      values["f1." + name].push_back(r->f1[c]);
    }
  }
  for (const auto& [name, v] : values) out.metrics[name] = mean_std(v);
  return out;
}

}  // namespace escape::metrics
