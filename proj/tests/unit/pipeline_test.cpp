#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "escape/corpus/io.hpp"
#include "escape/nn/checkpoint.hpp"
#include "escape/pipeline/commands.hpp"
#include "escape/synth/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace escape::pipeline {
namespace {

namespace fs = std::filesystem;
using escape::testing::TempDir;

const nlohmann::json kTinyModel = {{"model",
                                    {{"seq_len", 32},
                                     {"seq_dim", 16},
                                     {"struct_dim", 12},
                                     {"layers", 1},
                                     {"heads", 2},
                                     {"patch", 8},
                                     {"image_side", 32},
                                     {"fusion_dim", 16}}}};

std::string slurp(const fs::path& p) { return read_file(p); }

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

/// Runs the CLI binary and returns its exit status; stdout and stderr go to `log`.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("'") + ESCAPE_CLI_PATH + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override { synth::write_fixture(dir_.path(), 64, 7, kTinyModel); }

  std::string config() const { return "--config '" + (dir_ / "config.json").string() + "'"; }
  fs::path out(const std::string& name = "") const { return dir_ / "out" / name; }

  int cli(const std::string& args) { return run_cli(config() + " " + args, dir_ / "cli.log"); }
  std::string log() const { return slurp(dir_ / "cli.log"); }

  void rewrite_config(const nlohmann::json& patch) {
    auto j = load_json(dir_ / "config.json");
    j.merge_patch(patch);
    write_file_atomic(dir_ / "config.json", j.dump(2));
  }

  void prepare() {
    ASSERT_EQ(cli("curate"), 0) << log();
    ASSERT_EQ(cli("split"), 0) << log();
    ASSERT_EQ(cli("structprep"), 0) << log();
  }

  TempDir dir_{"escape-pipeline"};
};

// --- config -----------------------------------------------------------------

TEST(RunConfig, ParsesAndResolvesRelativePaths) {
  const auto cfg = parse_run_config(
      nlohmann::json::parse(R"({"output_dir": "o", "sources": [{"path": "a.fasta"}],
                                "split": {"fractions": [0.5, 0.3, 0.2], "seed": 9},
                                "training": {"epochs": 3}, "seeds": [1, 2], "mode": "sequence_only"})"),
      "/data");
  EXPECT_EQ(cfg.out(), fs::path("/data/o"));
  EXPECT_EQ(cfg.fractions[0], 0.5);
  EXPECT_EQ(cfg.split_seed, 9u);
  EXPECT_EQ(cfg.training.epochs, 3);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(cfg.model.mode, model::Mode::kSequenceOnly);
  EXPECT_EQ(cfg.sources.at(0).mapping.origin, "a");
}

TEST(RunConfig, MalformedJsonIsParseError) {
  TempDir dir;
  write_file_atomic(dir / "c.json", "{\"seeds\": [1,");
  try {
    load_run_config(dir / "c.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(exit_code(e.code()), 2);
  }
}

TEST(RunConfig, HashIgnoresPathsButNotHyperparameters) {
  auto a = parse_run_config(nlohmann::json::parse(R"({"output_dir": "x", "seeds": [1]})"), "/one");
  auto b = parse_run_config(nlohmann::json::parse(R"({"output_dir": "y", "seeds": [1]})"), "/two");
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.training.epochs += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(RunConfig, OverridesApply) {
  RunConfig cfg;
  Overrides o;
  o.seeds = std::vector<std::uint64_t>{5};
  o.mode = model::Mode::kStructureOnly;
  o.epochs = 7;
  o.threshold = 0.25;
  o.ensemble = metrics::EnsembleRule::kProbability;
  apply_overrides(cfg, o);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{5}));
  EXPECT_EQ(cfg.model.mode, model::Mode::kStructureOnly);
  EXPECT_EQ(cfg.training.epochs, 7);
  EXPECT_EQ(cfg.threshold, 0.25);
  EXPECT_EQ(cfg.ensemble, metrics::EnsembleRule::kProbability);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code(ErrorCode::kUsage), 2);
  EXPECT_EQ(exit_code(ErrorCode::kParseError), 2);
  EXPECT_EQ(exit_code(ErrorCode::kInfeasibleSplit), 3);
  EXPECT_EQ(exit_code(ErrorCode::kMissingModality), 4);
  EXPECT_EQ(exit_code(ErrorCode::kCheckpointMismatch), 5);
}

// --- CLI usage ----------------------------------------------------------------

TEST_F(PipelineTest, UsageErrors) {
  EXPECT_EQ(run_cli("", dir_ / "cli.log"), 2);
  EXPECT_EQ(run_cli("frobnicate", dir_ / "cli.log"), 2);
  EXPECT_EQ(run_cli("curate", dir_ / "cli.log"), 2) << "config is required";
  EXPECT_EQ(run_cli("curate --config '" + (dir_ / "nope.json").string() + "'", dir_ / "cli.log"), 2);
  EXPECT_EQ(cli("train"), 2) << "train needs a fold";
  EXPECT_EQ(cli("--mode sideways curate"), 2);
}

// --- curate -----------------------------------------------------------------

TEST_F(PipelineTest, CurateRejectsSelenocysteineAsSyntheticResidue) {
  ASSERT_EQ(cli("curate"), 0) << log();
  const auto rejections = slurp(out("rejections.csv"));
  EXPECT_NE(rejections.find("AMPX001"), std::string::npos);
  const auto line = rejections.substr(rejections.find("AMPX001"));
  EXPECT_NE(line.substr(0, line.find('\n')).find("synthetic_residue"), std::string::npos);
  const auto curated = corpus::read_corpus_table(slurp(out("curated.csv")), "curated.csv");
  EXPECT_EQ(curated.size(), 64u);
  for (const auto& r : curated) EXPECT_EQ(r.sequence.find('U'), std::string::npos);
}

TEST_F(PipelineTest, CurateIsAFixpoint) {
  ASSERT_EQ(cli("curate"), 0) << log();
  const auto first = corpus::read_corpus_table(slurp(out("curated.csv")), "curated.csv");
  // Feed the curated table back in as the only source.
  TempDir again;
  fs::copy_file(out("curated.csv"), again / "curated.csv");
  write_file_atomic(again / "config.json",
                    R"({"output_dir": "out", "sources": [{"path": "curated.csv", "format": "corpus"}]})");
  ASSERT_EQ(run_cli("--config '" + (again / "config.json").string() + "' curate", again / "cli.log"), 0)
      << slurp(again / "cli.log");
  const auto second = corpus::read_corpus_table(slurp(again / "out" / "curated.csv"), "curated.csv");
  ASSERT_EQ(second.size(), first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(second[i].id, first[i].id);
    EXPECT_EQ(second[i].sequence, first[i].sequence);
    EXPECT_EQ(second[i].labels, first[i].labels);
  }
}

TEST_F(PipelineTest, CurateWithoutSourcesIsUsageError) {
  rewrite_config({{"sources", nlohmann::json::array()}});
  EXPECT_EQ(cli("curate"), 2) << log();
}

TEST_F(PipelineTest, CurateMissingSourceFile) {
  rewrite_config({{"sources", {{{"path", "absent.fasta"}}}}});
  EXPECT_EQ(cli("curate"), 2) << log();
}

// --- split ------------------------------------------------------------------

TEST_F(PipelineTest, SplitIsDeterministic) {
  ASSERT_EQ(cli("curate"), 0);
  ASSERT_EQ(cli("split"), 0) << log();
  const auto first = slurp(out("split.csv"));
  ASSERT_EQ(cli("split"), 0);
  EXPECT_EQ(slurp(out("split.csv")), first);
  ASSERT_EQ(cli("--seed 43 split"), 0);
  EXPECT_NE(slurp(out("split.csv")), first);
}

TEST_F(PipelineTest, SplitRejectsBadFractions) {
  ASSERT_EQ(cli("curate"), 0);
  rewrite_config({{"split", {{"fractions", {0.5, 0.4, 0.2}}}}});
  EXPECT_EQ(cli("split"), 2) << log();
}

TEST_F(PipelineTest, SplitInfeasibleStratum) {
  write_file_atomic(dir_ / "few.fasta", ">V1 antiviral\nGLFDIIKKIAESF\n>V2 antiviral\nKWKLFKKIEKVGQ\n");
  rewrite_config({{"sources", {{{"path", "few.fasta"}}}}});
  ASSERT_EQ(cli("curate"), 0) << log();
  EXPECT_EQ(cli("split"), 3) << log();
}

// --- structprep -------------------------------------------------------------

TEST_F(PipelineTest, StructprepNeedsStructuresDir) {
  ASSERT_EQ(cli("curate"), 0);
  ASSERT_EQ(cli("split"), 0);
  fs::remove_all(dir_ / "structures");
  EXPECT_EQ(cli("structprep"), 4) << log();
}

// --- train ------------------------------------------------------------------

TEST_F(PipelineTest, TrainFoldTypo) {
  prepare();
  EXPECT_EQ(cli("train --fold fold3"), 2) << log();
  EXPECT_EQ(cli("train --fold test"), 2) << log();
}

TEST_F(PipelineTest, TrainWithoutStructureCacheIsMissingModality) {
  ASSERT_EQ(cli("curate"), 0);
  ASSERT_EQ(cli("split"), 0);
  EXPECT_EQ(cli("train --fold fold1"), 4) << log();
  EXPECT_EQ(cli("--mode structure_only train --fold fold1"), 4) << log();
  EXPECT_EQ(cli("--mode sequence_only train --fold fold1"), 0) << log();
}

TEST_F(PipelineTest, SmokeTrainIsFastAndReproducible) {
  prepare();
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(cli("train --fold fold1 --epochs 2"), 0) << log();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 60.0);
  const auto ckpt = out("checkpoints/both-fold1-42.esck");
  ASSERT_TRUE(fs::exists(ckpt));
  const auto first = slurp(ckpt);
  ASSERT_EQ(cli("train --fold fold1 --epochs 2"), 0);
  EXPECT_EQ(slurp(ckpt), first);

  // Log: provenance header then one JSON object per epoch.
  std::ifstream in(out("logs/both-fold1-42.jsonl"));
  std::string line;
  int epochs = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j.contains("epoch")) ++epochs;
  }
  EXPECT_EQ(epochs, 2);
}

// --- eval -------------------------------------------------------------------

TEST_F(PipelineTest, SingleCheckpointHasNoEnsembleField) {
  prepare();
  ASSERT_EQ(cli("train --fold fold1"), 0) << log();
  ASSERT_EQ(cli("eval '" + out("checkpoints/both-fold1-42.esck").string() + "'"), 0) << log();
  const auto report = load_json(out("report-both.json"));
  ASSERT_EQ(report["runs"].size(), 1u);
  EXPECT_FALSE(report["runs"][0].contains("ensemble"));
  EXPECT_FALSE(report.contains("aggregate"));
}

TEST_F(PipelineTest, SeedEnsemblesAndAggregate) {
  prepare();
  for (const char* seed : {"42", "1665", "8914"})
    for (const char* fold : {"fold1", "fold2"})
      ASSERT_EQ(cli(std::string("--seed ") + seed + " --epochs 1 train --fold " + fold), 0) << log();
  ASSERT_EQ(cli("--seeds 42,1665,8914 eval"), 0) << log();
  const auto report = load_json(out("report-both.json"));
  ASSERT_EQ(report["runs"].size(), 3u);
  for (const auto& run : report["runs"]) {
    EXPECT_EQ(run["ensemble"]["members"], 2);
    EXPECT_EQ(run["ensemble"]["rule"], "logit");
  }
  ASSERT_TRUE(report.contains("aggregate"));
  const auto table = slurp(out("report-both.txt"));
  EXPECT_NE(table.find("±"), std::string::npos);
  for (const char* seed : {"42", "1665", "8914"})
    EXPECT_TRUE(fs::exists(out(std::string("predictions-both-") + seed + ".csv")));
}

TEST_F(PipelineTest, EvalPredictionsDelegatesToScore) {
  prepare();
  ASSERT_EQ(cli("train --fold fold1"), 0);
  ASSERT_EQ(cli("train --fold fold2"), 0);
  ASSERT_EQ(cli("eval"), 0) << log();
  const auto eval_report = load_json(out("report-both.json"))["runs"][0]["report"];
  const auto predictions = out("predictions-both-42.csv").string();
  ASSERT_EQ(cli("eval --predictions '" + predictions + "'"), 0) << log();
  const auto via_eval = load_json(out("score-report.json"))["report"];
  fs::remove(out("score-report.json"));
  ASSERT_EQ(cli("--fold test score '" + predictions + "'"), 0) << log();
  const auto via_score = load_json(out("score-report.json"))["report"];
  EXPECT_EQ(via_eval, via_score);
  EXPECT_EQ(via_eval["mAP"], eval_report["mAP"]);
  EXPECT_EQ(via_eval["macro_f1"], eval_report["macro_f1"]);
}

TEST_F(PipelineTest, EvalWithoutCheckpointsIsUsageError) {
  prepare();
  EXPECT_EQ(cli("eval"), 2) << log();
}

TEST_F(PipelineTest, CheckpointFromOtherVersionIsMismatch) {
  prepare();
  ASSERT_EQ(cli("train --fold fold1"), 0);
  const auto path = out("checkpoints/both-fold1-42.esck");
  auto ckpt = nn::decode_checkpoint(slurp(path));
  auto meta = nlohmann::json::parse(ckpt.metadata);
  meta["toolkit_version"] = "0.0.1";
  ckpt.metadata = meta.dump();
  write_file_atomic(path, nn::encode_checkpoint(ckpt));
  EXPECT_EQ(cli("eval '" + path.string() + "'"), 5) << log();
}

TEST_F(PipelineTest, CorruptCheckpointIsMismatch) {
  prepare();
  fs::create_directories(out("checkpoints"));
  write_file_atomic(out("checkpoints/both-fold1-42.esck"), "not a checkpoint");
  EXPECT_EQ(cli("eval '" + out("checkpoints/both-fold1-42.esck").string() + "'"), 5) << log();
}

TEST_F(PipelineTest, CheckpointsOfDifferentArchitecturesDoNotEnsemble) {
  prepare();
  ASSERT_EQ(cli("train --fold fold1"), 0);
  rewrite_config({{"model", {{"seq_dim", 32}}}});
  ASSERT_EQ(cli("train --fold fold2"), 0);
  EXPECT_EQ(cli("eval"), 5) << log();
}

// --- ablate and stats ---------------------------------------------------------

TEST_F(PipelineTest, AblationSharesTestRecords) {
  prepare();
  ASSERT_EQ(cli("--epochs 1 ablate"), 0) << log();
  const auto j = load_json(out("ablation.json"));
  const auto ids = j["modes"]["both"]["test_ids_sha256"];
  EXPECT_EQ(j["modes"]["sequence_only"]["test_ids_sha256"], ids);
  EXPECT_EQ(j["modes"]["structure_only"]["test_ids_sha256"], ids);
  EXPECT_TRUE(fs::exists(out("ablation.txt")));
}

TEST_F(PipelineTest, AblationWithoutStructuresIsMissingModality) {
  ASSERT_EQ(cli("curate"), 0);
  ASSERT_EQ(cli("split"), 0);
  EXPECT_EQ(cli("--epochs 1 ablate"), 4) << log();
}

TEST_F(PipelineTest, Stats) {
  ASSERT_EQ(cli("curate"), 0);
  ASSERT_EQ(cli("stats"), 0) << log();
  const auto j = load_json(out("stats.json"));
  EXPECT_EQ(j["stats"]["records"], 64);
}

// --- provenance ---------------------------------------------------------------

TEST_F(PipelineTest, EveryArtifactCarriesVersionAndConfigHash) {
  prepare();
  ASSERT_EQ(cli("train --fold fold1"), 0);
  ASSERT_EQ(cli("train --fold fold2"), 0);
  ASSERT_EQ(cli("eval"), 0);
  ASSERT_EQ(cli("stats"), 0);
  const auto cfg = load_run_config(dir_ / "config.json");
  const std::string hash = config_hash(cfg);
  for (const char* name : {"curated.csv", "rejections.csv", "split.csv", "structprep.csv", "predictions-both-42.csv",
                           "report-both.json", "report-both.txt", "stats.json", "logs/both-fold1-42.jsonl"}) {
    const auto text = slurp(out(name));
    EXPECT_NE(text.find(std::string(kToolkitVersion)), std::string::npos) << name;
    EXPECT_NE(text.find(hash), std::string::npos) << name;
  }
  const auto meta = nlohmann::json::parse(nn::decode_checkpoint(slurp(out("checkpoints/both-fold1-42.esck"))).metadata);
  EXPECT_EQ(meta["toolkit_version"], kToolkitVersion);
  EXPECT_EQ(meta["config_hash"], hash);
}

}  // namespace
}  // namespace escape::pipeline
