#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "escape/core/binary_io.hpp"
#include "escape/core/error.hpp"
#include "escape/core/hash.hpp"
#include "escape/core/version.hpp"
#include "escape/corpus/curation.hpp"
#include "escape/corpus/split.hpp"
#include "escape/metrics/metrics.hpp"
#include "escape/model/config.hpp"
#include "escape/model/trainer.hpp"
#include "json.hpp"

namespace escape::pipeline {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// One raw input of `curate`. Formats: "fasta" (header "ID tag|tag"),
/// "table" (id,sequence,annotations) or "corpus" (an already labeled corpus
/// table whose labels and sources pass through unchanged).
struct SourceSpec {
  fs::path path;
  std::string format = "fasta";
  corpus::SourceMapping mapping;
};

struct TrainingConfig {
  int epochs = 100;
  int batch_size = 64;
  int micro_batch = 8;
  nn::AdamWOptions optimizer;
};

struct RunConfig {
  /// Directory relative paths are resolved against (the config file's).
  fs::path base_dir = ".";
  fs::path output_dir = "escape-out";
  /// Labeled corpus consumed by `split`; defaults to <out>/curated.csv.
  std::optional<fs::path> corpus;
  /// Fold-annotated corpus consumed downstream; defaults to <out>/split.csv.
  std::optional<fs::path> split_corpus;
  /// Coordinate files named <record id>.pdb.
  std::optional<fs::path> structures_dir;

  std::vector<SourceSpec> sources;
  std::vector<std::string> negative_keywords = corpus::default_negative_keywords();
  corpus::SplitFractions fractions = {0.4, 0.4, 0.2};
  std::uint64_t split_seed = 42;
  model::ModelConfig model;
  TrainingConfig training;
  std::vector<std::uint64_t> seeds = {42, 1665, 8914};
  double threshold = 0.5;
  metrics::EnsembleRule ensemble = metrics::EnsembleRule::kLogit;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
  fs::path out() const { return resolve(output_dir); }
  fs::path curated_path() const { return corpus ? resolve(*corpus) : out() / "curated.csv"; }
  fs::path split_path() const { return split_corpus ? resolve(*split_corpus) : out() / "split.csv"; }
  fs::path structure_cache() const { return out() / "structures"; }
  fs::path checkpoint_dir() const { return out() / "checkpoints"; }
  fs::path log_dir() const { return out() / "logs"; }

  void validate() const {
    model.validate();
    corpus::check_fractions(fractions);
    if (seeds.empty()) throw Error(ErrorCode::kUsage, "seeds must be non-empty");
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::kUsage, "threshold must lie in (0, 1)");
    if (training.epochs < 0 || training.batch_size <= 0 || training.micro_batch <= 0)
      throw Error(ErrorCode::kUsage, "training sizes must be positive");
    if (!(training.optimizer.lr > 0.0)) throw Error(ErrorCode::kUsage, "learning rate must be positive");
    for (const auto& s : sources) {
      if (s.format != "fasta" && s.format != "table" && s.format != "corpus")
        throw Error(ErrorCode::kUsage, "source " + s.path.string() + ": unknown format '" + s.format + "'");
      if (s.format != "corpus") corpus::validate_mapping(s.mapping);
    }
  }
};

/// Command-line overrides applied on top of the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<model::Mode> mode;
  std::optional<int> epochs;
  std::optional<double> threshold;
  std::optional<metrics::EnsembleRule> ensemble;
  std::optional<fs::path> out;
};

inline Json training_json(const TrainingConfig& t) {
  return Json{{"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"micro_batch", t.micro_batch},
              {"lr", t.optimizer.lr},
              {"beta1", t.optimizer.beta1},
              {"beta2", t.optimizer.beta2},
              {"eps", t.optimizer.eps},
              {"weight_decay", t.optimizer.weight_decay}};
}

/// Everything that influences results, without filesystem locations, so the
/// same experiment hashes identically wherever it runs.
inline Json experiment_json(const RunConfig& c) {
  Json j;
  j["model"] = model::to_json(c.model);
  j["training"] = training_json(c.training);
  j["split"] = {{"fractions", c.fractions}, {"seed", c.split_seed}};
  j["seeds"] = c.seeds;
  j["threshold"] = c.threshold;
  j["ensemble"] = std::string(metrics::to_string(c.ensemble));
  j["negative_keywords"] = c.negative_keywords;
  Json rules = Json::array();
  for (const auto& s : c.sources) {
    Json src{{"origin", s.mapping.origin}, {"format", s.format}, {"negative", s.mapping.negative}};
    for (const auto& r : s.mapping.rules) src["rules"].push_back({r.pattern, r.target});
    src["default_annotations"] = s.mapping.default_annotations;
    rules.push_back(std::move(src));
  }
  j["sources"] = std::move(rules);
  return j;
}

inline std::string config_hash(const RunConfig& c) { return sha256_hex(experiment_json(c).dump()).substr(0, 16); }

inline RunConfig parse_run_config(const nlohmann::json& j, fs::path base_dir) {
  RunConfig c;
  c.base_dir = std::move(base_dir);
  try {
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("corpus")) c.corpus = fs::path(j.at("corpus").get<std::string>());
    if (j.contains("split_corpus")) c.split_corpus = fs::path(j.at("split_corpus").get<std::string>());
    if (j.contains("structures_dir")) c.structures_dir = fs::path(j.at("structures_dir").get<std::string>());
    if (j.contains("negative_keywords")) {
      c.negative_keywords = j.at("negative_keywords").get<std::vector<std::string>>();
    } else if (j.contains("extra_negative_keywords")) {
      for (const auto& k : j.at("extra_negative_keywords")) c.negative_keywords.push_back(k.get<std::string>());
    }
    if (j.contains("sources")) {
      for (const auto& s : j.at("sources")) {
        SourceSpec spec;
        spec.path = s.at("path").get<std::string>();
        spec.format = s.value("format", std::string("fasta"));
        spec.mapping.origin = s.value("origin", spec.path.stem().string());
        spec.mapping.negative = s.value("negative", false);
        if (s.contains("rules")) {
          for (const auto& r : s.at("rules"))
            spec.mapping.rules.push_back({r.at("pattern").get<std::string>(), r.at("target").get<std::string>()});
        } else {
          spec.mapping.rules = corpus::default_rules();
        }
        if (s.contains("default_annotations"))
          spec.mapping.default_annotations = s.at("default_annotations").get<std::vector<std::string>>();
        c.sources.push_back(std::move(spec));
      }
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      if (s.contains("fractions")) {
        const auto f = s.at("fractions").get<std::vector<double>>();
        if (f.size() != 3) throw Error(ErrorCode::kUsage, "split.fractions needs three values (fold1, fold2, test)");
        c.fractions = {f[0], f[1], f[2]};
      }
      if (s.contains("seed")) c.split_seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"), c.model);
    if (j.contains("mode")) c.model.mode = model::parse_mode(j.at("mode").get<std::string>());
    if (j.contains("training")) {
      const auto& t = j.at("training");
      c.training.epochs = t.value("epochs", c.training.epochs);
      c.training.batch_size = t.value("batch_size", c.training.batch_size);
      c.training.micro_batch = t.value("micro_batch", c.training.micro_batch);
      c.training.optimizer.lr = t.value("lr", c.training.optimizer.lr);
      c.training.optimizer.beta1 = t.value("beta1", c.training.optimizer.beta1);
      c.training.optimizer.beta2 = t.value("beta2", c.training.optimizer.beta2);
      c.training.optimizer.eps = t.value("eps", c.training.optimizer.eps);
      c.training.optimizer.weight_decay = t.value("weight_decay", c.training.optimizer.weight_decay);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("threshold")) c.threshold = j.at("threshold").get<double>();
    if (j.contains("ensemble")) c.ensemble = metrics::parse_ensemble_rule(j.at("ensemble").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("config: ") + e.what());
  }
  return c;
}

/// Reads a JSON run config; relative paths resolve against its directory.
inline RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kUsage, "config file " + path.string() + " does not exist");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.seeds) c.seeds = *o.seeds;
  if (o.mode) c.model.mode = *o.mode;
  if (o.epochs) c.training.epochs = *o.epochs;
  if (o.threshold) c.threshold = *o.threshold;
  if (o.ensemble) c.ensemble = *o.ensemble;
  if (o.out) c.output_dir = fs::absolute(*o.out);
}

/// Header block shared by every text artifact.
inline std::vector<std::string> provenance_lines(const RunConfig& c) {
  return {"escape " + std::string(kToolkitVersion), "config_hash " + config_hash(c)};
}

inline Json provenance_json(const RunConfig& c) {
  return Json{{"toolkit_version", kToolkitVersion}, {"config_hash", config_hash(c)}};
}

}  // namespace escape::pipeline
