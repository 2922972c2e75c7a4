#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "escape/core/binary_io.hpp"
#include "escape/core/rng.hpp"
#include "escape/corpus/records.hpp"
#include "escape/corpus/sequence.hpp"
#include "escape/structgeo/structure.hpp"
#include "json.hpp"

// Synthetic corpora and coordinate files for tests, demos and benchmarks.
namespace escape::synth {

inline constexpr std::string_view kStandardResidues = "ACDEFGHIKLMNPQRSTVWY";

/// Background residues exclude the letters used by class motifs.
inline constexpr std::string_view kBackgroundResidues = "ACEGILMNQSTV";
inline constexpr std::array<std::string_view, corpus::kNumClasses> kMotifs = {"KWRK", "DYPD", "HFHF", "WPYW", "RRKR"};

inline std::string random_sequence(CounterRng& rng, std::size_t length, std::string_view alphabet = kStandardResidues) {
  std::string s(length, 'A');
  for (auto& c : s) c = alphabet[rng.below(alphabet.size())];
  return s;
}

/// Background residues with the motif of every set class written at
/// random (possibly overlapping) positions, twice each.
inline std::string motif_sequence(CounterRng& rng, const corpus::LabelVector& labels, std::size_t length) {
  std::string s = random_sequence(rng, length, kBackgroundResidues);
  for (std::size_t c = 0; c < corpus::kNumClasses; ++c) {
    if (!labels[c]) continue;
    for (int copy = 0; copy < 2; ++copy) {
      const auto& motif = kMotifs[c];
      const std::size_t at = rng.below(length - motif.size() + 1);
      s.replace(at, motif.size(), motif);
    }
  }
  return s;
}

using structgeo::Vec3;

inline Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

inline Vec3 random_unit(CounterRng& rng) {
  for (;;) {
    Vec3 v{2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-3 && n <= 1.0) return scaled(v, 1.0 / n);
  }
}

/// Random proper rotation (via a random unit quaternion) as a 3x3 row-major matrix.
inline std::array<double, 9> random_rotation(CounterRng& rng) {
  double q[4];
  double n = 0;
  do {
    n = 0;
    for (auto& v : q) {
      v = rng.normal();
      n += v * v;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  for (auto& v : q) v /= n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
          2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
          2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

inline Vec3 rotate(const std::array<double, 9>& r, const Vec3& v) {
  return {r[0] * v[0] + r[1] * v[1] + r[2] * v[2], r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
          r[6] * v[0] + r[7] * v[1] + r[8] * v[2]};
}

enum class Segment { kHelix, kStrand, kCoil };

/// Local Cα geometry of one segment, starting at the origin.
inline std::vector<Vec3> segment_points(CounterRng& rng, Segment kind, std::size_t n) {
  std::vector<Vec3> out;
  switch (kind) {
    case Segment::kHelix:
      for (std::size_t i = 0; i < n; ++i) {
        const double a = static_cast<double>(i) * 100.0 * std::numbers::pi / 180.0;
        out.push_back({2.3 * std::cos(a) - 2.3, 2.3 * std::sin(a), 1.5 * static_cast<double>(i)});
      }
      break;
    case Segment::kStrand:
      for (std::size_t i = 0; i < n; ++i) out.push_back({3.3 * static_cast<double>(i), i % 2 ? 0.9 : -0.9, 0.0});
      break;
    case Segment::kCoil: {
      Vec3 p{0, 0, 0}, dir = random_unit(rng);
      for (std::size_t i = 0; i < n; ++i) {
        out.push_back(p);
        dir = random_unit(rng);
        p = add(p, scaled(dir, 3.8));
      }
      break;
    }
  }
  return out;
}

/// A Cα trace whose secondary-structure mix depends on the labels:
/// antibacterial and antimicrobial favour helices, antifungal strands,
/// antiviral hairpins (strand, turn, strand), antiparasitic alternates, and
/// Non-AMP is mostly coil.
inline structgeo::CaTrace label_trace(CounterRng& rng, const corpus::LabelVector& labels, std::size_t length) {
  std::vector<Segment> plan;
  if (labels.is_non_amp()) plan = {Segment::kCoil, Segment::kCoil, Segment::kHelix};
  if (labels[0]) plan.insert(plan.end(), {Segment::kHelix, Segment::kHelix});
  if (labels[1]) plan.insert(plan.end(), {Segment::kStrand, Segment::kCoil, Segment::kStrand});
  if (labels[2]) plan.insert(plan.end(), {Segment::kStrand, Segment::kStrand});
  if (labels[3]) plan.insert(plan.end(), {Segment::kHelix, Segment::kStrand, Segment::kHelix});
  if (plan.empty()) plan = {Segment::kHelix};
  structgeo::CaTrace trace;
  trace.chain = 'A';
  const std::size_t per = std::max<std::size_t>(2, (length + plan.size() - 1) / plan.size());
  Vec3 origin{0, 0, 0};
  for (std::size_t k = 0; trace.coords.size() < length; ++k) {
    const auto kind = plan[k % plan.size()];
    const auto rot = random_rotation(rng);
    const auto pts = segment_points(rng, kind, std::min(per, length - trace.coords.size()));
    for (const auto& p : pts) trace.coords.push_back(add(origin, rotate(rot, p)));
    origin = add(trace.coords.back(), scaled(random_unit(rng), 3.8));
  }
  return trace;
}

inline std::string three_letter(char residue) {
  static const std::string kOne = "ACDEFGHIKLMNPQRSTVWYJBZ";
  static const std::array<const char*, 23> kThree = {"ALA", "CYS", "ASP", "GLU", "PHE", "GLY", "HIS", "ILE",
                                                     "LYS", "LEU", "MET", "ASN", "PRO", "GLN", "ARG", "SER",
                                                     "THR", "VAL", "TRP", "TYR", "XLE", "ASX", "GLX"};
  const auto at = kOne.find(residue);
  return at == std::string::npos ? "UNK" : kThree[at];
}

/// Fixed-column ATOM records (N, CA and C per residue; only CA carries the
/// trace, the others are offset decoys the parser must skip).
inline std::string write_pdb(const structgeo::CaTrace& trace, std::string_view sequence, char chain = 'A') {
  std::string out = "HEADER    SYNTHETIC PEPTIDE\n";
  char line[96];
  int serial = 1;
  for (std::size_t i = 0; i < trace.coords.size(); ++i) {
    const auto& p = trace.coords[i];
    const auto res = three_letter(i < sequence.size() ? sequence[i] : 'G');
    const int seq = static_cast<int>(i) + 1;
    const struct {
      const char* name;
      double dx;
      const char* element;
    } atoms[] = {{" N  ", -1.2, "N"}, {" CA ", 0.0, "C"}, {" C  ", 1.3, "C"}};
    for (const auto& a : atoms) {
      std::snprintf(line, sizeof line, "ATOM  %5d %4s %3s %c%4d    %8.3f%8.3f%8.3f  1.00  0.00          %2s\n", serial++,
                    a.name, res.c_str(), chain, seq, p[0] + a.dx, p[1], p[2], a.element);
      out += line;
    }
  }
  out += "TER\nEND\n";
  return out;
}

/// Label vector drawn from fixed class prevalences (antiparasitic rarest);
/// roughly a quarter of records are AMPs.
inline corpus::LabelVector imbalanced_labels(CounterRng& rng) {
  corpus::LabelVector v;
  if (rng.uniform() >= 0.27) return v;  // Non-AMP
  v.bits[0] = rng.uniform() < 0.62;
  v.bits[1] = rng.uniform() < 0.18;
  v.bits[2] = rng.uniform() < 0.24;
  v.bits[3] = rng.uniform() < 0.07;
  v.bits[4] = 1;
  return v;
}

/// Distinct random sequences with imbalanced labels, sorted by id.
inline std::vector<corpus::PeptideRecord> imbalanced_corpus(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::set<std::string> seen;
  std::vector<corpus::PeptideRecord> out;
  while (out.size() < n) {
    corpus::PeptideRecord r;
    r.sequence = random_sequence(rng, 10 + rng.below(60));
    if (!seen.insert(r.sequence).second) continue;
    r.id = corpus::record_id(r.sequence);
    r.labels = imbalanced_labels(rng);
    r.sources = {"synthetic"};
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

struct SyntheticPeptide {
  std::string sequence;
  corpus::LabelVector labels;
  structgeo::CaTrace trace;
};

/// Label vectors cycled by the small labeled corpora: every class has
/// positives and a quarter of the entries are Non-AMP.
inline const std::vector<corpus::LabelVector>& label_cycle() {
  static const std::vector<corpus::LabelVector> kCycle = {
      corpus::LabelVector::from_bits({1, 0, 0, 0, 1}), corpus::LabelVector::from_bits({0, 0, 0, 0, 0}),
      corpus::LabelVector::from_bits({0, 1, 0, 0, 1}), corpus::LabelVector::from_bits({0, 0, 1, 0, 1}),
      corpus::LabelVector::from_bits({1, 0, 1, 0, 1}), corpus::LabelVector::from_bits({0, 0, 0, 0, 0}),
      corpus::LabelVector::from_bits({0, 0, 0, 1, 1}), corpus::LabelVector::from_bits({0, 0, 0, 0, 1}),
  };
  return kCycle;
}

/// Small corpus with motif-bearing sequences (12-40 residues) and
/// label-dependent traces.
inline std::vector<SyntheticPeptide> labeled_peptides(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::set<std::string> seen;
  std::vector<SyntheticPeptide> out;
  const auto& cycle = label_cycle();
  while (out.size() < n) {
    SyntheticPeptide p;
    p.labels = cycle[out.size() % cycle.size()];
    const std::size_t length = 12 + rng.below(29);
    p.sequence = motif_sequence(rng, p.labels, length);
    if (!seen.insert(p.sequence).second) continue;
    p.trace = label_trace(rng, p.labels, length);
    out.push_back(std::move(p));
  }
  return out;
}

/// Annotation tags that the default rule table maps back onto `labels`.
inline std::string annotation_tags(const corpus::LabelVector& labels, std::size_t variant) {
  static const std::array<std::array<const char*, 2>, 4> kTags = {{{"antibacterial", "anti-Gram positive"},
                                                                   {"antiviral", "anti-HIV"},
                                                                   {"antifungal", "Antifungal activity"},
                                                                   {"antiparasitic", "antimalarial"}}};
  std::string out;
  for (std::size_t c = 0; c < 4; ++c) {
    if (!labels[c]) continue;
    if (!out.empty()) out += "|";
    out += kTags[c][variant % 2];
  }
  return out.empty() ? std::string("antimicrobial") : out;
}

/// Writes a self-contained pipeline fixture into `dir`: AMP and negative
/// FASTA sources (plus a few entries curation must reject), one coordinate
/// file per curated record, and config.json. Returns the kept peptides.
inline std::vector<SyntheticPeptide> write_fixture(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                                                   const nlohmann::json& overrides = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "structures");
  const auto peptides = labeled_peptides(n, seed);
  std::string amps, negatives;
  std::size_t amp_no = 0, neg_no = 0;
  for (std::size_t i = 0; i < peptides.size(); ++i) {
    const auto& p = peptides[i];
    char id[32];
    if (p.labels.is_non_amp()) {
      std::snprintf(id, sizeof id, "NEG%04zu", ++neg_no);
      negatives += ">" + std::string(id) + " structural protein\n" + p.sequence + "\n";
    } else {
      std::snprintf(id, sizeof id, "AMP%04zu", ++amp_no);
      amps += ">" + std::string(id) + " " + annotation_tags(p.labels, i) + "\n" + p.sequence + "\n";
    }
    write_file_atomic(dir / "structures" / (corpus::record_id(p.sequence) + ".pdb"), write_pdb(p.trace, p.sequence));
  }
  // Entries curation drops: a selenocysteine, a too-short peptide and a keyword hit.
  amps += ">AMPX001 antibacterial\nGLFDUIKKLLG\n>AMPX002 antiviral\nKWK\n";
  negatives += ">NEGX001 integral membrane protein\nMSTNPKPQRKTKRNTNRRPQDVKFPGG\n";
  write_file_atomic(dir / "amps.fasta", amps);
  write_file_atomic(dir / "negatives.fasta", negatives);

  nlohmann::json config = {
      {"output_dir", "out"},
      {"structures_dir", "structures"},
      {"sources",
       {{{"path", "amps.fasta"}, {"format", "fasta"}, {"origin", "synthetic_amps"}},
        {{"path", "negatives.fasta"}, {"format", "fasta"}, {"origin", "synthetic_negatives"}, {"negative", true}}}},
      {"split", {{"fractions", {0.4, 0.4, 0.2}}, {"seed", 42}}},
      {"training", {{"epochs", 2}, {"batch_size", 64}, {"micro_batch", 8}}},
      {"seeds", {42}},
      {"threshold", 0.5},
      {"ensemble", "logit"},
      {"mode", "both"},
  };
  config.merge_patch(overrides);
  write_file_atomic(dir / "config.json", config.dump(2) + "\n");
  return peptides;
}

}  // namespace escape::synth
