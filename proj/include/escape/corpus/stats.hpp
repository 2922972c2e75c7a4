#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "escape/corpus/records.hpp"
#include "json.hpp"

namespace escape::corpus {

inline constexpr std::size_t kLengthBin = 10;

struct CorpusStats {
  std::size_t records = 0;
  std::size_t amp = 0;
  std::size_t non_amp = 0;
  std::array<std::size_t, kNumClasses> class_counts{};
  /// AMP label sets keyed by their functional classes joined with '+'
  /// ("antimicrobial" when no functional bit is set). Sums to `amp`.
  std::map<std::string, std::size_t> combinations;
  /// Length histograms in bins of kLengthBin residues, keyed by bin start.
  std::map<std::size_t, std::size_t> amp_lengths;
  std::map<std::size_t, std::size_t> non_amp_lengths;
};

inline std::string combination_key(const LabelVector& labels) {
  std::string key;
  for (std::size_t c = 0; c + 1 < kNumClasses; ++c) {
    if (!labels[c]) continue;
    if (!key.empty()) key += "+";
    key += kClassNames[c];
  }
  return key.empty() ? std::string(kClassNames[4]) : key;
}

inline CorpusStats corpus_stats(const std::vector<PeptideRecord>& records) {
  CorpusStats s;
  for (const auto& r : records) {
    ++s.records;
    const std::size_t bin = (r.sequence.size() / kLengthBin) * kLengthBin;
    if (r.labels.is_non_amp()) {
      ++s.non_amp;
      ++s.non_amp_lengths[bin];
      continue;
    }
    ++s.amp;
    ++s.amp_lengths[bin];
    for (std::size_t c = 0; c < kNumClasses; ++c) s.class_counts[c] += r.labels[c] ? 1 : 0;
    ++s.combinations[combination_key(r.labels)];
  }
  return s;
}

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  nlohmann::ordered_json j;
  j["records"] = s.records;
  j["amp"] = s.amp;
  j["non_amp"] = s.non_amp;
  for (std::size_t c = 0; c < kNumClasses; ++c) j["class_counts"][std::string(kClassNames[c])] = s.class_counts[c];
  j["combinations"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.combinations) j["combinations"][k] = v;
  auto hist = [](const std::map<std::size_t, std::size_t>& h) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& [start, count] : h) arr.push_back({{"from", start}, {"to", start + kLengthBin - 1}, {"count", count}});
    return arr;
  };
  j["length_histogram"]["amp"] = hist(s.amp_lengths);
  j["length_histogram"]["non_amp"] = hist(s.non_amp_lengths);
  return j;
}

}  // namespace escape::corpus
