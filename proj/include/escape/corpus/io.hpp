#pragma once

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "escape/core/error.hpp"
#include "escape/core/text.hpp"
#include "escape/corpus/records.hpp"

namespace escape::corpus {

struct FastaRecord {
  std::string header;  // text after '>'
  std::string sequence;
  std::size_t line = 0;  // line number of the header
};

/// Reads '>'-headed FASTA. Sequence lines are concatenated with all
/// whitespace removed; blank lines and CRLF endings are tolerated.
inline std::vector<FastaRecord> read_fasta(std::string_view text, std::string_view file_name = "<fasta>") {
  std::vector<FastaRecord> out;
  std::size_t line_no = 0;
  for (auto line : text::lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '>') {
      out.push_back({std::string(text::trim(line.substr(1))), {}, line_no});
      continue;
    }
    if (line.front() == ';') continue;
    if (out.empty()) {
      if (text::trim(line).empty()) continue;
      throw Error(ErrorCode::kParseError,
                  std::string(file_name) + ":" + std::to_string(line_no) + ": sequence data before the first header");
    }
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) out.back().sequence += c;
  }
  return out;
}

/// Splits a FASTA header "ID annotation|annotation;..." into an id and tags.
inline RawEntry raw_entry_from_fasta(const FastaRecord& rec, std::string origin) {
  RawEntry e;
  e.origin = std::move(origin);
  e.sequence = rec.sequence;
  const auto header = text::trim(rec.header);
  const auto space = header.find_first_of(" \t");
  e.source_id = std::string(header.substr(0, space));
  if (space != std::string_view::npos) {
    std::string rest(text::trim(header.substr(space)));
    for (char& c : rest)
      if (c == ';') c = '|';
    for (auto& tag : text::split(rest, '|')) {
      auto t = text::trim(tag);
      if (!t.empty()) e.annotations.emplace_back(t);
    }
  }
  return e;
}

/// Raw delimited source table with header id,sequence,annotations (tags
/// separated by '|' or ';').
inline std::vector<RawEntry> read_raw_table(std::string_view text, std::string origin, std::string_view file_name = "<table>") {
  std::vector<RawEntry> out;
  const auto rows = text::lines(text);
  std::size_t line_no = 0;
  int id_col = -1, seq_col = -1, ann_col = -1;
  bool header_seen = false;
  for (auto line : rows) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto cells = text::split(line, ',');
    if (!header_seen) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto name = text::trim(cells[i]);
        if (name == "id") id_col = static_cast<int>(i);
        if (name == "sequence") seq_col = static_cast<int>(i);
        if (name == "annotations") ann_col = static_cast<int>(i);
      }
      if (seq_col < 0) throw Error(ErrorCode::kMissingColumns, std::string(file_name) + ": header lacks 'sequence'");
      header_seen = true;
      continue;
    }
    if (static_cast<int>(cells.size()) <= std::max({id_col, seq_col, ann_col}))
      throw Error(ErrorCode::kParseError, std::string(file_name) + ":" + std::to_string(line_no) + ": too few columns");
    RawEntry e;
    e.origin = origin;
    e.source_id = id_col >= 0 ? std::string(text::trim(cells[id_col])) : "row" + std::to_string(line_no);
    e.sequence = std::string(text::trim(cells[seq_col]));
    if (ann_col >= 0) {
      std::string tags = cells[ann_col];
      for (char& c : tags)
        if (c == ';') c = '|';
      for (auto& tag : text::split(tags, '|')) {
        auto t = text::trim(tag);
        if (!t.empty()) e.annotations.emplace_back(t);
      }
    }
    out.push_back(std::move(e));
  }
  if (!header_seen) throw Error(ErrorCode::kMissingColumns, std::string(file_name) + ": empty table");
  return out;
}

inline constexpr std::string_view kCorpusHeader =
    "id,sequence,antibacterial,antiviral,antifungal,antiparasitic,antimicrobial,source";

/// Writes the labeled-corpus table. `preamble` lines are emitted as '#'
/// comments; the fold column is added when `with_fold` is set.
inline std::string write_corpus_table(const std::vector<PeptideRecord>& records, bool with_fold,
                                      const std::vector<std::string>& preamble = {}) {
  std::ostringstream out;
  for (const auto& line : preamble) out << "# " << line << '\n';
  out << kCorpusHeader << (with_fold ? ",fold" : "") << '\n';
  for (const auto& r : records) {
    out << r.id << ',' << r.sequence;
    for (auto b : r.labels.bits) out << ',' << static_cast<int>(b);
    out << ',';
    bool first = true;
    for (const auto& s : r.sources) {
      out << (first ? "" : ";") << s;
      first = false;
    }
    if (with_fold) out << ',' << to_string(r.fold);
    out << '\n';
  }
  return out.str();
}

/// Parses the labeled-corpus table. Lines starting with '#' are comments.
/// The fold column is optional.
inline std::vector<PeptideRecord> read_corpus_table(std::string_view text, std::string_view file_name = "<corpus>") {
  std::vector<PeptideRecord> out;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  auto where = [&] { return std::string(file_name) + ":" + std::to_string(line_no); };
  std::array<int, 9> col{};
  col.fill(-1);
  static constexpr std::array<std::string_view, 9> kColumns = {
      "id", "sequence", "antibacterial", "antiviral", "antifungal", "antiparasitic", "antimicrobial", "source", "fold"};
  for (auto line : text::lines(text)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto cells = text::split(line, ',');
    if (header.empty()) {
      header = cells;
      for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t c = 0; c < kColumns.size(); ++c)
          if (text::trim(cells[i]) == kColumns[c]) col[c] = static_cast<int>(i);
      for (std::size_t c = 0; c < 8; ++c)
        if (col[c] < 0) throw Error(ErrorCode::kMissingColumns, where() + ": missing column '" + std::string(kColumns[c]) + "'");
      continue;
    }
    if (cells.size() != header.size()) throw Error(ErrorCode::kParseError, where() + ": expected " + std::to_string(header.size()) + " columns");
    PeptideRecord r;
    r.id = std::string(text::trim(cells[col[0]]));
    r.sequence = std::string(text::trim(cells[col[1]]));
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const auto v = text::trim(cells[col[2 + k]]);
      if (v != "0" && v != "1") throw Error(ErrorCode::kParseError, where() + ": label values must be 0 or 1");
      r.labels.bits[k] = v == "1" ? 1 : 0;
    }
    for (auto& s : text::split(cells[col[7]], ';')) {
      auto t = text::trim(s);
      if (!t.empty()) r.sources.emplace(t);
    }
    if (col[8] >= 0) {
      try {
        r.fold = parse_fold(text::trim(cells[col[8]]));
      } catch (const Error& e) {
        throw Error(ErrorCode::kParseError, where() + ": " + e.what());
      }
    }
    out.push_back(std::move(r));
  }
  if (header.empty()) throw Error(ErrorCode::kMissingColumns, std::string(file_name) + ": empty corpus table");
  return out;
}

}  // namespace escape::corpus
