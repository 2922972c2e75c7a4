#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "escape/core/binary_io.hpp"
#include "escape/core/hash.hpp"
#include "escape/core/parallel.hpp"
#include "escape/corpus/curation.hpp"
#include "escape/corpus/io.hpp"
#include "escape/corpus/sequence.hpp"
#include "escape/corpus/split.hpp"
#include "escape/corpus/stats.hpp"
#include "escape/metrics/metrics.hpp"
#include "escape/metrics/report.hpp"
#include "escape/model/trainer.hpp"
#include "escape/pipeline/model_io.hpp"
#include "escape/pipeline/run_config.hpp"
#include "escape/structgeo/esdm.hpp"
#include "escape/structgeo/structure.hpp"

namespace escape::pipeline {

/// Exit status for an error raised by a command.
inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
    case ErrorCode::kIo:
    case ErrorCode::kParseError:
    case ErrorCode::kMissingColumns:
    case ErrorCode::kIdMismatch:
    case ErrorCode::kUnknownSymbol:
    case ErrorCode::kNoCaAtoms:
    case ErrorCode::kMalformedRecord:
    case ErrorCode::kHeadDivisibility:
      return 2;
    case ErrorCode::kInfeasibleSplit:
    case ErrorCode::kEmptyFold:
    case ErrorCode::kNoPositives:
      return 3;
    case ErrorCode::kMissingModality:
      return 4;
    case ErrorCode::kCheckpointMismatch:
      return 5;
    default:
      return 1;
  }
}

struct Console {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;

  void warn(const std::string& message) const { err << "warning: " << message << '\n'; }
};

inline std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

inline void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw Error(ErrorCode::kUsage, what + " " + path.string() + " does not exist");
}

inline std::vector<corpus::PeptideRecord> load_corpus(const fs::path& path) {
  return corpus::read_corpus_table(read_file(path), path.string());
}

/// The fold-annotated corpus when present, else the curated one.
inline fs::path downstream_corpus(const RunConfig& cfg) {
  if (fs::exists(cfg.split_path())) return cfg.split_path();
  require_file(cfg.curated_path(), "corpus");
  return cfg.curated_path();
}

// ---------------------------------------------------------------------------
// curate

struct CurateOutput {
  corpus::CurationResult result;
  fs::path corpus_path;
};

inline void curate_corpus_source(const std::vector<corpus::PeptideRecord>& rows, const SourceSpec& spec,
                                 corpus::CurationResult& result) {
  for (const auto& row : rows) {
    auto reject = [&](std::string_view reason) {
      result.rejections.push_back({spec.mapping.origin, row.id, std::string(reason)});
    };
    const auto check = corpus::validate_sequence(row.sequence);
    if (!check.ok()) {
      reject(corpus::to_string(*check.rejected));
      continue;
    }
    if (!corpus::length_filter(check.sequence)) {
      reject("length_out_of_range");
      continue;
    }
    corpus::PeptideRecord r;
    r.sequence = check.sequence;
    r.id = corpus::record_id(r.sequence);
    r.labels = row.labels;
    r.labels.normalize();
    r.sources = row.sources.empty() ? std::set<std::string>{spec.mapping.origin} : row.sources;
    result.records.push_back(std::move(r));
  }
}

inline CurateOutput cmd_curate(const RunConfig& cfg, const Console& io = {}) {
  if (cfg.sources.empty()) throw Error(ErrorCode::kUsage, "curate needs at least one source");
  CurateOutput out;
  auto& result = out.result;
  for (const auto& spec : cfg.sources) {
    const auto path = cfg.resolve(spec.path);
    require_file(path, "source");
    const auto text = read_file(path);
    if (spec.format == "corpus") {
      curate_corpus_source(corpus::read_corpus_table(text, path.string()), spec, result);
      continue;
    }
    std::vector<corpus::RawEntry> entries;
    if (spec.format == "fasta") {
      for (const auto& rec : corpus::read_fasta(text, path.string()))
        entries.push_back(corpus::raw_entry_from_fasta(rec, spec.mapping.origin));
    } else {
      entries = corpus::read_raw_table(text, spec.mapping.origin, path.string());
    }
    corpus::curate_source(entries, spec.mapping, cfg.negative_keywords, result);
  }
  corpus::finalize_curation(result);
  for (const auto& id : result.conflicts) io.warn("record " + id + " has both Non-AMP and AMP evidence; AMP labels kept");

  out.corpus_path = cfg.curated_path();
  write_file_atomic(out.corpus_path, corpus::write_corpus_table(result.records, false, provenance_lines(cfg)));

  std::ostringstream rejections;
  for (const auto& line : provenance_lines(cfg)) rejections << "# " << line << '\n';
  rejections << "origin,source_id,reason\n";
  std::map<std::string, std::size_t> by_reason;
  for (const auto& r : result.rejections) {
    rejections << r.origin << ',' << r.source_id << ',' << r.reason << '\n';
    ++by_reason[r.reason];
  }
  write_file_atomic(cfg.out() / "rejections.csv", rejections.str());

  Json report = provenance_json(cfg);
  report["command"] = "curate";
  report["kept"] = result.records.size();
  report["rejected"] = result.rejections.size();
  report["rejections_by_reason"] = Json::object();
  for (const auto& [reason, n] : by_reason) report["rejections_by_reason"][reason] = n;
  report["conflicts"] = result.conflicts;
  report["unmapped_annotations"] = result.unmapped_annotations;
  report["stats"] = corpus::to_json(corpus::corpus_stats(result.records));
  write_file_atomic(cfg.out() / "curate_stats.json", json_text(report));

  io.out << "curated " << result.records.size() << " records (" << result.rejections.size() << " rejected) -> "
         << out.corpus_path.string() << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// split

inline std::string format_prevalence_table(const std::vector<corpus::PrevalenceRow>& rows) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-10s %7s", "fold", "records");
  out << buf;
  for (auto name : corpus::kClassNames) {
    std::snprintf(buf, sizeof buf, " %14s", std::string(name).c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof buf, " %14s\n", std::string(corpus::kNonAmpName).c_str());
  out << buf;
  for (const auto& row : rows) {
    const std::string label = row.fold == corpus::Fold::kUnassigned ? "all" : std::string(corpus::to_string(row.fold));
    std::snprintf(buf, sizeof buf, "%-10s %7zu", label.c_str(), row.size);
    out << buf;
    for (double p : row.prevalence) {
      std::snprintf(buf, sizeof buf, " %13.2f%%", 100.0 * p);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

inline std::vector<corpus::PeptideRecord> cmd_split(RunConfig cfg, std::optional<std::uint64_t> seed,
                                                    const Console& io = {}) {
  if (seed) cfg.split_seed = *seed;
  const auto input = cfg.curated_path();
  require_file(input, "corpus");
  auto records = corpus::stratified_split(load_corpus(input), cfg.fractions, cfg.split_seed);
  write_file_atomic(cfg.split_path(), corpus::write_corpus_table(records, true, provenance_lines(cfg)));
  const auto rows = corpus::prevalence_table(records);
  const auto table = format_prevalence_table(rows);
  Json report = provenance_json(cfg);
  report["command"] = "split";
  report["seed"] = cfg.split_seed;
  report["fractions"] = cfg.fractions;
  report["max_prevalence_deviation"] = corpus::max_prevalence_deviation(records);
  for (const auto& row : rows) {
    Json r{{"fold", row.fold == corpus::Fold::kUnassigned ? "all" : std::string(corpus::to_string(row.fold))},
           {"records", row.size}};
    for (std::size_t s = 0; s < corpus::kStrata; ++s)
      r["prevalence"][s < corpus::kNumClasses ? std::string(corpus::kClassNames[s]) : std::string(corpus::kNonAmpName)] =
          row.prevalence[s];
    report["folds"].push_back(std::move(r));
  }
  write_file_atomic(cfg.out() / "split_report.json", json_text(report));
  io.out << table;
  char buf[96];
  std::snprintf(buf, sizeof buf, "max prevalence deviation %.2f%% -> ", 100.0 * corpus::max_prevalence_deviation(records));
  io.out << buf << cfg.split_path().string() << '\n';
  return records;
}

// ---------------------------------------------------------------------------
// structprep

struct StructPrepStatus {
  std::string id;
  std::string status;  // ok | missing | error
  std::size_t residues = 0;
  std::size_t gaps = 0;
  std::string detail;
};

inline std::vector<StructPrepStatus> cmd_structprep(const RunConfig& cfg, const Console& io = {}) {
  if (!cfg.structures_dir || !fs::is_directory(cfg.resolve(*cfg.structures_dir)))
    throw Error(ErrorCode::kMissingModality, "structures_dir is not set or is not a directory");
  const auto source_dir = cfg.resolve(*cfg.structures_dir);
  const auto records = load_corpus(downstream_corpus(cfg));
  const auto cache = cfg.structure_cache();
  fs::create_directories(cache);
  const auto side = static_cast<std::size_t>(cfg.model.image_side);
  std::vector<StructPrepStatus> status(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    auto& s = status[i];
    s.id = records[i].id;
    const auto pdb = source_dir / (s.id + ".pdb");
    if (!fs::exists(pdb)) {
      s.status = "missing";
      return;
    }
    try {
      const auto trace = structgeo::parse_ca_coordinates(read_file(pdb));
      s.residues = trace.coords.size();
      s.gaps = trace.gaps.size();
      write_file_atomic(cache / (s.id + ".esdm"), structgeo::encode_esdm(structgeo::prepare_struct_input(trace, side)));
      s.status = "ok";
    } catch (const Error& e) {
      s.status = "error";
      s.detail = std::string(to_string(e.code()));
    }
  });
  std::ostringstream log;
  for (const auto& line : provenance_lines(cfg)) log << "# " << line << '\n';
  log << "id,status,residues,gaps,detail\n";
  std::map<std::string, std::size_t> counts;
  for (const auto& s : status) {
    log << s.id << ',' << s.status << ',' << s.residues << ',' << s.gaps << ',' << s.detail << '\n';
    ++counts[s.status];
    if (s.status == "error") io.warn("structure for " + s.id + " rejected: " + s.detail);
    if (s.gaps > 0) io.warn("structure for " + s.id + " skips " + std::to_string(s.gaps) + " residue number gap(s)");
  }
  write_file_atomic(cfg.out() / "structprep.csv", log.str());
  io.out << "structprep: " << counts["ok"] << " ok, " << counts["missing"] << " missing, " << counts["error"]
         << " failed -> " << cache.string() << '\n';
  return status;
}

// ---------------------------------------------------------------------------
// examples

struct ExampleSet {
  std::vector<model::Example> examples;
  std::vector<std::string> excluded;  // ids dropped for lack of a structure
};

/// Tokenizes records and attaches cached structure inputs when requested.
/// Records without a cached structure are left out and listed.
inline ExampleSet build_examples(const RunConfig& cfg, const std::vector<corpus::PeptideRecord>& records,
                                 bool with_structure) {
  const auto cache = cfg.structure_cache();
  if (with_structure && !fs::is_directory(cache))
    throw Error(ErrorCode::kMissingModality, "no structure cache at " + cache.string() + " (run structprep)");
  ExampleSet out;
  const auto side = static_cast<std::size_t>(cfg.model.image_side);
  for (const auto& r : records) {
    model::Example e{r.id, corpus::tokenize(r.sequence, static_cast<std::size_t>(cfg.model.seq_len)), {}, r.labels};
    if (with_structure) {
      const auto blob = cache / (r.id + ".esdm");
      if (!fs::exists(blob)) {
        out.excluded.push_back(r.id);
        continue;
      }
      auto input = structgeo::decode_esdm(read_file(blob));
      if (input.side != side)
        throw Error(ErrorCode::kMissingModality, blob.string() + " has side " + std::to_string(input.side) +
                                                     ", model expects " + std::to_string(side) + " (rerun structprep)");
      e.structure = std::move(input.values);
    }
    out.examples.push_back(std::move(e));
  }
  return out;
}

inline std::vector<corpus::PeptideRecord> records_in_fold(const std::vector<corpus::PeptideRecord>& all, corpus::Fold fold) {
  std::vector<corpus::PeptideRecord> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out), [&](const auto& r) { return r.fold == fold; });
  return out;
}

inline std::vector<corpus::PeptideRecord> load_split_corpus(const RunConfig& cfg) {
  require_file(cfg.split_path(), "split corpus");
  return load_corpus(cfg.split_path());
}

// ---------------------------------------------------------------------------
// train

struct TrainResult {
  fs::path checkpoint;
  fs::path log;
  std::size_t examples = 0;
  double final_loss = 0.0;
  std::vector<std::string> excluded;
};

inline corpus::Fold training_fold(std::string_view name) {
  const auto fold = corpus::parse_fold(name);
  if (fold != corpus::Fold::kFold1 && fold != corpus::Fold::kFold2)
    throw Error(ErrorCode::kUsage, "training fold must be fold1 or fold2, got '" + std::string(name) + "'");
  return fold;
}

/// Trains cfg.model on one fold with one seed and writes
/// <out>/checkpoints/{mode}-{fold}-{seed}.esck plus a JSONL epoch log.
/// `require_structure` drops structure-less records even in sequence_only
/// mode, so ablation modes see the same records.
inline TrainResult cmd_train(const RunConfig& cfg, corpus::Fold fold, std::uint64_t seed, const Console& io = {},
                             bool require_structure = false) {
  cfg.validate();
  const auto mode = cfg.model.mode;
  const auto records = records_in_fold(load_split_corpus(cfg), fold);
  auto set = build_examples(cfg, records, require_structure || model::uses_structure(mode));
  if (!set.excluded.empty())
    io.warn(std::to_string(set.excluded.size()) + " " + std::string(corpus::to_string(fold)) +
            " record(s) without structure excluded from training");
  if (set.examples.empty()) {
    if (!set.excluded.empty()) throw Error(ErrorCode::kMissingModality, "no training record has a structure input");
    throw Error(ErrorCode::kEmptyFold, std::string(corpus::to_string(fold)) + " has no records");
  }

  model::EscapeModel<float> net(cfg.model, CounterRng(seed).fork(model::kInitStream).next_u64());
  nn::AdamW<float> optimizer(net.parameters(), cfg.training.optimizer);
  model::TrainOptions options;
  options.epochs = cfg.training.epochs;
  options.batch_size = cfg.training.batch_size;
  options.micro_batch = cfg.training.micro_batch;
  options.optimizer = cfg.training.optimizer;

  TrainResult result;
  result.examples = set.examples.size();
  result.excluded = std::move(set.excluded);
  const auto stem = checkpoint_name(mode, fold, seed);
  result.log = cfg.log_dir() / (stem.substr(0, stem.size() - 5) + ".jsonl");
  fs::create_directories(cfg.log_dir());
  std::ostringstream log;
  log << Json{{"toolkit_version", kToolkitVersion}, {"config_hash", config_hash(cfg)}, {"mode", model::to_string(mode)},
              {"fold", corpus::to_string(fold)}, {"seed", seed}, {"examples", result.examples}}
             .dump()
      << '\n';
  result.final_loss = model::train(net, optimizer, set.examples, options, seed, [&](const model::EpochLog& e) {
    log << Json{{"epoch", e.epoch}, {"loss", e.loss}, {"seconds", e.seconds}}.dump() << '\n';
    io.out << model::to_string(mode) << ' ' << corpus::to_string(fold) << " seed " << seed << " epoch " << e.epoch
           << " loss " << e.loss << '\n';
  });
  write_file_atomic(result.log, log.str());

  CheckpointInfo info{std::string(kToolkitVersion), config_hash(cfg), cfg.model, std::string(corpus::to_string(fold)),
                      seed, cfg.training.epochs, result.examples};
  result.checkpoint = cfg.checkpoint_dir() / stem;
  write_file_atomic(result.checkpoint, encode_model_checkpoint(net, optimizer, info));
  io.out << "checkpoint -> " << result.checkpoint.string() << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// eval

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<std::string> members;  // checkpoint file names
  metrics::PredictionSet predictions;
  metrics::EvalReport report;
};

struct EvalResult {
  model::Mode mode = model::Mode::kBoth;
  std::vector<std::string> test_ids;
  std::vector<SeedRun> runs;
  std::optional<metrics::SeedAggregate> aggregate;
  std::vector<std::string> warnings;
};

/// Checkpoints of `mode` for every configured seed that exist on disk.
inline std::vector<fs::path> discover_checkpoints(const RunConfig& cfg, model::Mode mode) {
  std::vector<fs::path> out;
  for (auto seed : cfg.seeds)
    for (auto fold : {corpus::Fold::kFold1, corpus::Fold::kFold2}) {
      const auto p = cfg.checkpoint_dir() / checkpoint_name(mode, fold, seed);
      if (fs::exists(p)) out.push_back(p);
    }
  return out;
}

/// Loads the checkpoints, groups them by seed, ensembles the fold models of
/// each seed on the test fold and aggregates over seeds.
inline EvalResult evaluate_checkpoints(const RunConfig& cfg, const std::vector<fs::path>& paths,
                                       bool require_structure = false) {
  if (paths.empty()) throw Error(ErrorCode::kUsage, "no checkpoints to evaluate");
  std::map<std::uint64_t, std::vector<std::pair<fs::path, LoadedModel>>> by_seed;
  std::optional<model::ModelConfig> shared;
  for (const auto& p : paths) {
    require_file(p, "checkpoint");
    auto loaded = load_model_checkpoint(read_file(p));
    if (shared && loaded.info.model != *shared)
      throw Error(ErrorCode::kCheckpointMismatch, p.string() + " was trained with a different model config");
    shared = loaded.info.model;
    by_seed[loaded.info.seed].emplace_back(p, std::move(loaded));
  }
  EvalResult result;
  result.mode = shared->mode;
  RunConfig shape = cfg;
  shape.model = *shared;
  auto set = build_examples(shape, records_in_fold(load_split_corpus(cfg), corpus::Fold::kTest),
                            require_structure || model::uses_structure(result.mode));
  if (!set.excluded.empty())
    result.warnings.push_back(std::to_string(set.excluded.size()) + " test record(s) without structure excluded");
  if (set.examples.empty()) throw Error(ErrorCode::kEmptyFold, "test fold has no usable records");
  for (const auto& e : set.examples) result.test_ids.push_back(e.id);

  std::vector<metrics::EvalReport> reports;
  for (auto& [seed, members] : by_seed) {
    SeedRun run;
    run.seed = seed;
    std::vector<metrics::PredictionSet> sets;
    for (auto& [path, loaded] : members) {
      run.members.push_back(path.filename().string());
      metrics::PredictionSet ps;
      ps.ids = result.test_ids;
      ps.kind = metrics::ScoreKind::kLogit;
      for (const auto& e : set.examples) ps.labels.push_back(e.labels);
      for (const auto& row : model::predict_logits(*loaded.model, set.examples, cfg.training.micro_batch)) {
        metrics::ClassScores s{};
        std::copy(row.begin(), row.end(), s.begin());
        ps.scores.push_back(s);
      }
      sets.push_back(std::move(ps));
    }
    run.predictions = sets.size() == 1 ? std::move(sets.front()) : metrics::ensemble(sets, cfg.ensemble);
    run.report = metrics::evaluate(run.predictions, cfg.threshold);
    run.report.seed = seed;
    run.report.mode = std::string(model::to_string(result.mode));
    for (const auto& w : run.report.warnings) result.warnings.push_back("seed " + std::to_string(seed) + ": " + w);
    reports.push_back(run.report);
    result.runs.push_back(std::move(run));
  }
  if (reports.size() >= 2) result.aggregate = metrics::aggregate_seeds(reports);
  return result;
}

inline Json to_json(const EvalResult& r, const RunConfig& cfg) {
  Json j = provenance_json(cfg);
  j["command"] = "eval";
  j["mode"] = std::string(model::to_string(r.mode));
  j["threshold"] = cfg.threshold;
  j["test_records"] = r.test_ids.size();
  std::string joined;
  for (const auto& id : r.test_ids) joined += id + "\n";
  j["test_ids_sha256"] = sha256_hex(joined);
  j["runs"] = Json::array();
  for (const auto& run : r.runs) {
    Json entry{{"seed", run.seed}, {"members", run.members}};
    if (run.members.size() > 1)
      entry["ensemble"] = {{"rule", std::string(metrics::to_string(cfg.ensemble))}, {"members", run.members.size()}};
    entry["report"] = metrics::to_json(run.report);
    j["runs"].push_back(std::move(entry));
  }
  if (r.aggregate) j["aggregate"] = metrics::to_json(*r.aggregate);
  j["warnings"] = r.warnings;
  return j;
}

inline std::vector<metrics::TableRow> table_rows(const EvalResult& r) {
  std::vector<metrics::TableRow> rows;
  const std::string mode(model::to_string(r.mode));
  for (const auto& run : r.runs) rows.push_back(metrics::table_row(mode + " seed " + std::to_string(run.seed), run.report));
  if (r.aggregate) rows.push_back(metrics::table_row(mode + " mean", *r.aggregate));
  return rows;
}

struct EvalOutput {
  EvalResult result;
  fs::path report;
  fs::path table;
};

inline EvalOutput cmd_eval(const RunConfig& cfg, const std::vector<fs::path>& checkpoints, const Console& io = {}) {
  EvalOutput out;
  out.result = evaluate_checkpoints(cfg, checkpoints.empty() ? discover_checkpoints(cfg, cfg.model.mode) : checkpoints);
  for (const auto& w : out.result.warnings) io.warn(w);
  const std::string mode(model::to_string(out.result.mode));
  for (const auto& run : out.result.runs)
    write_file_atomic(cfg.out() / ("predictions-" + mode + "-" + std::to_string(run.seed) + ".csv"),
                      metrics::write_prediction_file(run.predictions, provenance_lines(cfg)));
  out.report = cfg.out() / ("report-" + mode + ".json");
  out.table = cfg.out() / ("report-" + mode + ".txt");
  write_file_atomic(out.report, json_text(to_json(out.result, cfg)));
  std::string table;
  for (const auto& line : provenance_lines(cfg)) table += "# " + line + "\n";
  table += metrics::format_results_table(table_rows(out.result), cfg.threshold);
  write_file_atomic(out.table, table);
  io.out << metrics::format_results_table(table_rows(out.result), cfg.threshold);
  io.out << "report -> " << out.report.string() << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// score

/// Scores an external prediction file against a labeled corpus table,
/// optionally restricted to one fold, and writes <out>/score-report.json.
inline metrics::EvalReport cmd_score(const RunConfig& cfg, const fs::path& predictions, const fs::path& truth,
                                     std::optional<corpus::Fold> fold, const Console& io = {}) {
  require_file(predictions, "predictions file");
  require_file(truth, "ground truth");
  auto records = load_corpus(truth);
  if (fold) records = records_in_fold(records, *fold);
  const auto set = metrics::read_prediction_file(read_file(predictions), predictions.string());
  auto report = metrics::score_predictions(set, records, cfg.threshold);
  for (const auto& w : report.warnings) io.warn(w);
  Json j = provenance_json(cfg);
  j["command"] = "score";
  j["predictions"] = predictions.filename().string();
  j["score_kind"] = std::string(metrics::to_string(set.kind));
  j["report"] = metrics::to_json(report);
  write_file_atomic(cfg.out() / "score-report.json", json_text(j));
  io.out << metrics::format_results_table({metrics::table_row(predictions.filename().string(), report)}, cfg.threshold);
  return report;
}

// ---------------------------------------------------------------------------
// ablate

struct AblationOutput {
  std::map<model::Mode, EvalResult> results;
  fs::path report;
  fs::path table;
};

/// Trains and evaluates sequence_only, structure_only and both with shared
/// seeds on the records that have structures, so all three see the same ids.
inline AblationOutput cmd_ablate(const RunConfig& cfg, const Console& io = {}) {
  AblationOutput out;
  Json j = provenance_json(cfg);
  j["command"] = "ablate";
  std::vector<metrics::TableRow> rows;
  for (auto mode : {model::Mode::kSequenceOnly, model::Mode::kStructureOnly, model::Mode::kBoth}) {
    RunConfig c = cfg;
    c.model.mode = mode;
    std::vector<fs::path> paths;
    for (auto seed : c.seeds)
      for (auto fold : {corpus::Fold::kFold1, corpus::Fold::kFold2})
        paths.push_back(cmd_train(c, fold, seed, io, true).checkpoint);
    auto result = evaluate_checkpoints(c, paths, true);
    for (const auto& w : result.warnings) io.warn(std::string(model::to_string(mode)) + ": " + w);
    if (!out.results.empty() && result.test_ids != out.results.begin()->second.test_ids)
      throw Error(ErrorCode::kIdMismatch, "ablation modes evaluated different test records");
    j["modes"][std::string(model::to_string(mode))] = to_json(result, c);
    const std::string label(model::to_string(mode));
    if (result.aggregate)
      rows.push_back(metrics::table_row(label, *result.aggregate));
    else
      rows.push_back(metrics::table_row(label, result.runs.front().report));
    out.results.emplace(mode, std::move(result));
  }
  out.report = cfg.out() / "ablation.json";
  out.table = cfg.out() / "ablation.txt";
  write_file_atomic(out.report, json_text(j));
  std::string table;
  for (const auto& line : provenance_lines(cfg)) table += "# " + line + "\n";
  table += metrics::format_results_table(rows, cfg.threshold);
  write_file_atomic(out.table, table);
  io.out << metrics::format_results_table(rows, cfg.threshold);
  return out;
}

// ---------------------------------------------------------------------------
// stats

inline corpus::CorpusStats cmd_stats(const RunConfig& cfg, const Console& io = {}) {
  const auto path = downstream_corpus(cfg);
  const auto stats = corpus::corpus_stats(load_corpus(path));
  Json j = provenance_json(cfg);
  j["command"] = "stats";
  j["corpus"] = path.filename().string();
  j["stats"] = corpus::to_json(stats);
  write_file_atomic(cfg.out() / "stats.json", json_text(j));
  io.out << json_text(j);
  return stats;
}

}  // namespace escape::pipeline
