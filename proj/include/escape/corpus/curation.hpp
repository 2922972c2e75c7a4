#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "escape/core/error.hpp"
#include "escape/core/text.hpp"
#include "escape/corpus/records.hpp"
#include "escape/corpus/sequence.hpp"

namespace escape::corpus {

inline const std::vector<std::string>& default_negative_keywords() {
  static const std::vector<std::string> kKeywords = {"membrane",   "toxic",      "secretory", "defensive",
                                                     "antibiotic", "anticancer", "antiviral", "antifungal"};
  return kKeywords;
}

/// True when the entry survives the negative-set filter: no annotation
/// contains any keyword (case-insensitive substring).
inline bool filter_negative_keywords(const std::vector<std::string>& annotations,
                                     const std::vector<std::string>& keywords = default_negative_keywords()) {
  for (const auto& a : annotations) {
    const auto lowered = text::lower(a);
    for (const auto& k : keywords)
      if (lowered.find(text::lower(k)) != std::string::npos) return false;
  }
  return true;
}

/// Maps annotation text onto one of the five classes or "non-amp" when the
/// pattern occurs (case-insensitive substring).
struct LabelRule {
  std::string pattern;
  std::string target;
};

struct SourceMapping {
  std::string origin;
  std::vector<LabelRule> rules;
  bool negative = false;
  /// Appended to every entry of the source, for single-activity databases.
  std::vector<std::string> default_annotations;
};

/// Rule table covering the usual activity vocabulary, including the
/// Gram-stain phenotype subclasses that fold into antibacterial.
inline std::vector<LabelRule> default_rules() {
  return {
      {"non-amp", "non-amp"},
      {"non-antimicrobial", "non-amp"},
      {"not antimicrobial", "non-amp"},
      {"antibacterial", "antibacterial"},
      {"anti-bacterial", "antibacterial"},
      {"bactericidal", "antibacterial"},
      {"anti-gram", "antibacterial"},
      {"gram-positive", "antibacterial"},
      {"gram positive", "antibacterial"},
      {"gram-negative", "antibacterial"},
      {"gram negative", "antibacterial"},
      {"antiviral", "antiviral"},
      {"anti-viral", "antiviral"},
      {"anti-hiv", "antiviral"},
      {"antifungal", "antifungal"},
      {"anti-fungal", "antifungal"},
      {"fungicidal", "antifungal"},
      {"antiparasitic", "antiparasitic"},
      {"anti-parasitic", "antiparasitic"},
      {"antimalarial", "antiparasitic"},
      {"antiprotozoal", "antiparasitic"},
      {"antiplasmodial", "antiparasitic"},
      {"antitrypanosomal", "antiparasitic"},
      {"anti-leishmania", "antiparasitic"},
      {"antimicrobial", "antimicrobial"},
  };
}

inline std::optional<std::size_t> class_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kClassNames[i] == name) return i;
  return std::nullopt;
}

inline void validate_mapping(const SourceMapping& mapping) {
  if (mapping.origin.empty()) throw Error(ErrorCode::kUsage, "source mapping without an origin name");
  for (const auto& r : mapping.rules)
    if (r.target != kNonAmpName && !class_index(r.target))
      throw Error(ErrorCode::kUsage, "rule '" + r.pattern + "' of " + mapping.origin + " targets unknown class '" + r.target + "'");
}

struct LabelDerivation {
  LabelVector labels;
  std::size_t unmapped = 0;  // annotations that matched no rule
};

/// Applies the mapping's rules to each annotation. An annotation hit by a
/// "non-amp" rule contributes negative evidence only; otherwise every
/// matching class rule sets its bit. Functional bits imply antimicrobial.
/// Throws NoRuleMatched when nothing matched at all.
inline LabelDerivation derive_labels(const std::vector<std::string>& annotations, const SourceMapping& mapping) {
  LabelDerivation out;
  bool matched = false;
  std::vector<std::string> all = annotations;
  all.insert(all.end(), mapping.default_annotations.begin(), mapping.default_annotations.end());
  for (const auto& a : all) {
    const auto lowered = text::lower(a);
    auto hits = [&](const LabelRule& r) { return lowered.find(text::lower(r.pattern)) != std::string::npos; };
    bool negative = false;
    for (const auto& r : mapping.rules)
      if (r.target == kNonAmpName && hits(r)) negative = true;
    if (negative) {
      matched = true;
      continue;
    }
    bool any = false;
    for (const auto& r : mapping.rules) {
      if (r.target == kNonAmpName || !hits(r)) continue;
      out.labels.bits[*class_index(r.target)] = 1;
      any = true;
    }
    matched |= any;
    if (!any) ++out.unmapped;
  }
  if (!matched) throw Error(ErrorCode::kNoRuleMatched, "no rule matched any annotation");
  out.labels.normalize();
  return out;
}

struct DedupResult {
  std::vector<PeptideRecord> records;
  /// Ids whose duplicates mixed Non-AMP and AMP evidence (AMP labels kept).
  std::vector<std::string> conflicts;
};

/// One record per distinct sequence: labels OR-ed, sources united, output
/// sorted by id. The fold survives only when all duplicates agree.
inline DedupResult dedup_merge(const std::vector<PeptideRecord>& records) {
  std::map<std::string, PeptideRecord> by_sequence;
  std::map<std::string, std::pair<bool, bool>> evidence;  // (saw non-amp, saw amp)
  for (const auto& r : records) {
    auto [it, inserted] = by_sequence.try_emplace(r.sequence, r);
    auto& ev = evidence[r.sequence];
    (r.labels.is_non_amp() ? ev.first : ev.second) = true;
    if (inserted) continue;
    PeptideRecord& m = it->second;
    m.labels = m.labels.merged(r.labels);
    m.sources.insert(r.sources.begin(), r.sources.end());
    if (m.fold != r.fold) m.fold = Fold::kUnassigned;
  }
  DedupResult out;
  for (auto& [seq, r] : by_sequence) {
    if (r.id.empty()) r.id = record_id(seq);
    if (evidence[seq].first && evidence[seq].second) out.conflicts.push_back(r.id);
    out.records.push_back(std::move(r));
  }
  std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(out.conflicts.begin(), out.conflicts.end());
  return out;
}

struct Rejection {
  std::string origin;
  std::string source_id;
  std::string reason;
};

struct CurationResult {
  std::vector<PeptideRecord> records;
  std::vector<Rejection> rejections;
  std::vector<std::string> conflicts;
  std::size_t unmapped_annotations = 0;
};

/// Cleans raw entries of one source into records (before deduplication).
inline void curate_source(const std::vector<RawEntry>& entries, const SourceMapping& mapping,
                          const std::vector<std::string>& negative_keywords, CurationResult& result) {
  validate_mapping(mapping);
  for (const auto& e : entries) {
    auto reject = [&](std::string_view reason) { result.rejections.push_back({e.origin, e.source_id, std::string(reason)}); };
    const auto check = validate_sequence(e.sequence);
    if (!check.ok()) {
      reject(to_string(*check.rejected));
      continue;
    }
    if (!length_filter(check.sequence)) {
      reject("length_out_of_range");
      continue;
    }
    PeptideRecord r;
    r.sequence = check.sequence;
    r.id = record_id(r.sequence);
    r.sources = {e.origin};
    if (mapping.negative) {
      if (!filter_negative_keywords(e.annotations, negative_keywords)) {
        reject("negative_keyword");
        continue;
      }
    } else {
      try {
        const auto derived = derive_labels(e.annotations, mapping);
        r.labels = derived.labels;
        result.unmapped_annotations += derived.unmapped;
      } catch (const Error& err) {
        if (err.code() != ErrorCode::kNoRuleMatched) throw;
        reject("no_rule_matched");
        continue;
      }
    }
    result.records.push_back(std::move(r));
  }
}

/// Deduplicates the accumulated records and sorts rejections for stable output.
inline void finalize_curation(CurationResult& result) {
  auto merged = dedup_merge(result.records);
  result.records = std::move(merged.records);
  result.conflicts = std::move(merged.conflicts);
  std::stable_sort(result.rejections.begin(), result.rejections.end(), [](const Rejection& a, const Rejection& b) {
    return std::tie(a.origin, a.source_id, a.reason) < std::tie(b.origin, b.source_id, b.reason);
  });
}

}  // namespace escape::corpus
