#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "escape/core/text.hpp"
#include "escape/corpus/io.hpp"
#include "escape/corpus/records.hpp"
#include "escape/metrics/metrics.hpp"
#include "json.hpp"

namespace escape::metrics {

inline constexpr std::string_view kPredictionHeader =
    "id,score_antibacterial,score_antiviral,score_antifungal,score_antiparasitic,score_antimicrobial,kind";

/// Writes the prediction table; `preamble` lines are emitted first as
/// '#' comments, which the reader skips.
inline std::string write_prediction_file(const PredictionSet& set, const std::vector<std::string>& preamble = {}) {
  set.validate();
  std::ostringstream out;
  for (const auto& line : preamble) out << "# " << line << '\n';
  out << kPredictionHeader << '\n';
  char buf[32];
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.ids[i];
    for (double v : set.scores[i]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << ',' << to_string(set.kind) << '\n';
  }
  return out.str();
}

/// Parses a prediction file (labels left empty). All rows must share one kind.
inline PredictionSet read_prediction_file(std::string_view text, std::string_view file_name = "<predictions>") {
  PredictionSet set;
  std::size_t line_no = 0;
  bool header_seen = false, kind_seen = false;
  std::array<int, kNumClasses + 2> col{};
  col.fill(-1);
  std::size_t width = 0;
  auto where = [&] { return std::string(file_name) + ":" + std::to_string(line_no); };
  for (auto line : text::lines(text)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto cells = text::split(line, ',');
    if (!header_seen) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto name = text::trim(cells[i]);
        if (name == "id") col[0] = static_cast<int>(i);
        if (name == "kind") col[kNumClasses + 1] = static_cast<int>(i);
        for (std::size_t c = 0; c < kNumClasses; ++c)
          if (name == "score_" + std::string(corpus::kClassNames[c])) col[c + 1] = static_cast<int>(i);
      }
      for (int c : col)
        if (c < 0) throw Error(ErrorCode::kMissingColumns, where() + ": header must be " + std::string(kPredictionHeader));
      width = cells.size();
      header_seen = true;
      continue;
    }
    if (cells.size() != width) throw Error(ErrorCode::kParseError, where() + ": expected " + std::to_string(width) + " columns");
    set.ids.emplace_back(text::trim(cells[col[0]]));
    ClassScores s{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const std::string cell(text::trim(cells[col[c + 1]]));
      std::size_t used = 0;
      try {
        s[c] = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size() || cell.empty() || !std::isfinite(s[c]))
        throw Error(ErrorCode::kParseError, where() + ": bad score '" + cell + "'");
    }
    set.scores.push_back(s);
    ScoreKind kind;
    try {
      kind = parse_score_kind(text::trim(cells[col[kNumClasses + 1]]));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParseError, where() + ": " + e.what());
    }
    if (kind_seen && kind != set.kind) throw Error(ErrorCode::kParseError, where() + ": mixed score kinds");
    if (kind == ScoreKind::kProbability)
      for (double v : s)
        if (v < 0.0 || v > 1.0) throw Error(ErrorCode::kParseError, where() + ": probability outside [0, 1]");
    set.kind = kind;
    kind_seen = true;
  }
  if (!header_seen) throw Error(ErrorCode::kMissingColumns, std::string(file_name) + ": empty prediction file");
  set.validate();
  return set;
}

/// Joins predictions to ground truth by id (truth order) and evaluates.
/// Truth ids missing from the predictions, or predicted ids absent from the
/// truth, are IdMismatch errors.
inline EvalReport score_predictions(const PredictionSet& predictions, const std::vector<corpus::PeptideRecord>& truth,
                                    double threshold = 0.5) {
  predictions.validate();
  std::map<std::string_view, std::size_t> row_of;
  for (std::size_t i = 0; i < predictions.size(); ++i) row_of[predictions.ids[i]] = i;
  PredictionSet joined;
  joined.kind = predictions.kind;
  for (const auto& r : truth) {
    const auto it = row_of.find(r.id);
    if (it == row_of.end()) throw Error(ErrorCode::kIdMismatch, "no prediction for record " + r.id);
    joined.ids.push_back(r.id);
    joined.scores.push_back(predictions.scores[it->second]);
    joined.labels.push_back(r.labels);
    row_of.erase(it);
  }
  if (!row_of.empty())
    throw Error(ErrorCode::kIdMismatch, "prediction for unknown record " + std::string(row_of.begin()->first));
  return evaluate(joined, threshold);
}

inline EvalReport score_prediction_file(std::string_view predictions_text, std::string_view truth_text, double threshold = 0.5) {
  return score_predictions(read_prediction_file(predictions_text), corpus::read_corpus_table(truth_text), threshold);
}

using Json = nlohmann::ordered_json;

inline Json to_json(const EvalReport& r) {
  Json j;
  if (r.seed) j["seed"] = *r.seed;
  if (!r.mode.empty()) j["mode"] = r.mode;
  j["records"] = r.records;
  j["threshold"] = r.threshold;
  j["mAP"] = r.map;
  j["macro_f1"] = r.macro_f1;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::string name(corpus::kClassNames[c]);
    j["ap"][name] = r.ap[c] ? Json(*r.ap[c]) : Json(nullptr);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) j["f1"][std::string(corpus::kClassNames[c])] = r.f1[c];
  j["warnings"] = r.warnings;
  return j;
}

inline Json to_json(const SeedAggregate& a) {
  Json j;
  j["seeds"] = a.seeds;
  for (const auto& [name, v] : a.metrics)
    j["metrics"][name] = {{"mean", v.mean}, {"std", v.std ? Json(*v.std) : Json(nullptr)}, {"n", v.count}};
  return j;
}

/// One row of a results table: a label plus per-metric mean/std.
struct TableRow {
  std::string label;
  std::map<std::string, MeanStd> metrics;
};

inline TableRow table_row(std::string label, const EvalReport& r) {
  TableRow row{std::move(label), {}};
  row.metrics["mAP"] = {r.map, std::nullopt, 1};
  row.metrics["macro_f1"] = {r.macro_f1, std::nullopt, 1};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::string name(corpus::kClassNames[c]);
    if (r.ap[c]) row.metrics["ap." + name] = {*r.ap[c], std::nullopt, 1};
    row.metrics["f1." + name] = {r.f1[c], std::nullopt, 1};
  }
  return row;
}

inline TableRow table_row(std::string label, const SeedAggregate& a) { return {std::move(label), a.metrics}; }

/// Two percentage tables (F1 then AP): overall column followed by the five
/// classes, cells "mean" or "mean±std".
inline std::string format_results_table(const std::vector<TableRow>& rows, double threshold) {
  std::ostringstream out;
  auto cell = [](const std::map<std::string, MeanStd>& m, const std::string& key) {
    const auto it = m.find(key);
    if (it == m.end() || it->second.count == 0) return std::string("n/a");
    char buf[64];
    if (it->second.std)
      std::snprintf(buf, sizeof buf, "%.1f±%.2f", 100.0 * it->second.mean, 100.0 * *it->second.std);
    else
      std::snprintf(buf, sizeof buf, "%.1f", 100.0 * it->second.mean);
    return std::string(buf);
  };
  std::size_t label_width = 5;
  for (const auto& r : rows) label_width = std::max(label_width, r.label.size());
  auto section = [&](const std::string& title, const std::string& overall, const std::string& prefix) {
    out << title << '\n';
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %-12s", static_cast<int>(label_width), "Model", "Overall");
    out << buf;
    for (auto name : corpus::kClassNames) {
      std::string header(name);
      header[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(header[0])));
      std::snprintf(buf, sizeof buf, "  %-14s", header.c_str());
      out << buf;
    }
    out << '\n';
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-*s  %-12s", static_cast<int>(label_width), r.label.c_str(),
                    cell(r.metrics, overall).c_str());
      out << buf;
      for (auto name : corpus::kClassNames) {
        std::snprintf(buf, sizeof buf, "  %-14s", cell(r.metrics, prefix + std::string(name)).c_str());
        out << buf;
      }
      out << '\n';
    }
  };
  char title[96];
  std::snprintf(title, sizeof title, "F1-score (%%, threshold %.2f)", threshold);
  section(title, "macro_f1", "f1.");
  out << '\n';
  section("Average precision (%)", "mAP", "ap.");
  return out.str();
}

}  // namespace escape::metrics
