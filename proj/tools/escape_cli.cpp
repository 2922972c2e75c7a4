// Command-line driver: curate, split, structprep, train, eval, ablate, stats, score.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "escape/pipeline/commands.hpp"

namespace {

namespace fs = std::filesystem;
using namespace escape;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string mode;
  std::optional<int> epochs;
  std::optional<double> threshold;
  std::string ensemble;
  std::string out;
  std::string fold;
};

pipeline::RunConfig load_config(const Flags& f, bool required) {
  pipeline::RunConfig cfg;
  if (!f.config.empty()) {
    cfg = pipeline::load_run_config(f.config);
  } else if (required) {
    throw Error(ErrorCode::kUsage, "--config is required for this command");
  } else {
    cfg.base_dir = fs::current_path();
    cfg.output_dir = ".";
  }
  pipeline::Overrides o;
  o.seed = f.seed;
  if (!f.seeds.empty()) o.seeds = f.seeds;
  if (!f.mode.empty()) o.mode = model::parse_mode(f.mode);
  o.epochs = f.epochs;
  o.threshold = f.threshold;
  if (!f.ensemble.empty()) o.ensemble = metrics::parse_ensemble_rule(f.ensemble);
  if (!f.out.empty()) o.out = f.out;
  pipeline::apply_overrides(cfg, o);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"escape: peptide activity toolkit (curation, structure prep, training, evaluation)"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "Run config (JSON); relative paths resolve against its directory");
  app.add_option("--seed", f.seed, "Seed for split or for a single training run");
  app.add_option("--seeds", f.seeds, "Comma-separated training seeds")->delimiter(',');
  app.add_option("--mode", f.mode, "sequence_only | structure_only | both");
  app.add_option("--epochs", f.epochs, "Training epochs");
  app.add_option("--threshold", f.threshold, "F1 decision threshold on probabilities");
  app.add_option("--ensemble", f.ensemble, "Fold ensemble rule: logit | probability");
  app.add_option("--out", f.out, "Output directory (overrides output_dir)");
  app.add_option("--fold", f.fold, "Fold: fold1 | fold2 (train) or a truth filter (score)");

  auto* curate = app.add_subcommand("curate", "Clean, label and deduplicate the configured sources");
  auto* split = app.add_subcommand("split", "Assign stratified folds to the curated corpus");
  auto* structprep = app.add_subcommand("structprep", "Build cached distance-matrix inputs from coordinate files");
  auto* train = app.add_subcommand("train", "Train one fold model for one seed");
  auto* eval = app.add_subcommand("eval", "Evaluate fold ensembles on the test fold and aggregate over seeds");
  std::vector<std::string> checkpoints;
  std::string predictions;
  eval->add_option("checkpoints", checkpoints, "Checkpoint files (default: discover by mode and seeds)");
  eval->add_option("--predictions", predictions, "Score this prediction file instead of checkpoints");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate sequence_only, structure_only and both");
  auto* stats = app.add_subcommand("stats", "Corpus composition report");
  auto* score = app.add_subcommand("score", "Score an external prediction file against a labeled corpus");
  std::string score_predictions, score_truth;
  score->add_option("predictions", score_predictions, "Prediction file")->required();
  score->add_option("truth", score_truth, "Labeled corpus table (default: the split corpus)");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const pipeline::Console io{std::cout, std::cerr};
  try {
    if (*curate) {
      pipeline::cmd_curate(load_config(f, true), io);
    } else if (*split) {
      pipeline::cmd_split(load_config(f, true), f.seed, io);
    } else if (*structprep) {
      pipeline::cmd_structprep(load_config(f, true), io);
    } else if (*train) {
      const auto cfg = load_config(f, true);
      if (f.fold.empty()) throw Error(ErrorCode::kUsage, "train needs --fold fold1|fold2");
      pipeline::cmd_train(cfg, pipeline::training_fold(f.fold), f.seed.value_or(cfg.seeds.front()), io);
    } else if (*eval) {
      auto cfg = load_config(f, true);
      if (f.seed && f.seeds.empty()) cfg.seeds = {*f.seed};
      if (!predictions.empty()) {
        pipeline::cmd_score(cfg, predictions, cfg.split_path(), corpus::Fold::kTest, io);
      } else {
        std::vector<fs::path> paths(checkpoints.begin(), checkpoints.end());
        pipeline::cmd_eval(cfg, paths, io);
      }
    } else if (*ablate) {
      auto cfg = load_config(f, true);
      if (f.seed && f.seeds.empty()) cfg.seeds = {*f.seed};
      pipeline::cmd_ablate(cfg, io);
    } else if (*stats) {
      pipeline::cmd_stats(load_config(f, true), io);
    } else if (*score) {
      const auto cfg = load_config(f, false);
      std::optional<corpus::Fold> fold;
      if (!f.fold.empty()) fold = corpus::parse_fold(f.fold);
      const fs::path truth = score_truth.empty() ? cfg.split_path() : fs::path(score_truth);
      pipeline::cmd_score(cfg, score_predictions, truth, fold, io);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pipeline::exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
