#pragma once

#include <memory>
#include <string>

#include "escape/core/version.hpp"
#include "escape/model/escape_model.hpp"
#include "escape/nn/adamw.hpp"
#include "escape/nn/checkpoint.hpp"
#include "escape/pipeline/run_config.hpp"

namespace escape::pipeline {

/// Provenance stored in a checkpoint's metadata block.
struct CheckpointInfo {
  std::string toolkit_version;
  std::string config_hash;
  model::ModelConfig model;
  std::string fold;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::size_t examples = 0;
};

inline std::string checkpoint_name(model::Mode mode, corpus::Fold fold, std::uint64_t seed) {
  return std::string(model::to_string(mode)) + "-" + std::string(corpus::to_string(fold)) + "-" + std::to_string(seed) +
         ".esck";
}

inline Json to_json(const CheckpointInfo& info) {
  return Json{{"toolkit_version", info.toolkit_version},
              {"config_hash", info.config_hash},
              {"mode", std::string(model::to_string(info.model.mode))},
              {"fold", info.fold},
              {"seed", info.seed},
              {"epochs", info.epochs},
              {"examples", info.examples},
              {"model", model::to_json(info.model)}};
}

inline CheckpointInfo checkpoint_info_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CheckpointInfo info;
    info.toolkit_version = j.at("toolkit_version").get<std::string>();
    info.config_hash = j.at("config_hash").get<std::string>();
    info.fold = j.at("fold").get<std::string>();
    info.seed = j.at("seed").get<std::uint64_t>();
    info.epochs = j.at("epochs").get<int>();
    info.examples = j.at("examples").get<std::size_t>();
    info.model = model::model_config_from_json(j.at("model"));
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCheckpointMismatch, std::string("unreadable checkpoint metadata: ") + e.what());
  }
}

template <class T>
std::string encode_model_checkpoint(const model::EscapeModel<T>& model, const nn::AdamW<T>& optimizer,
                                    const CheckpointInfo& info) {
  nn::Checkpoint ckpt;
  ckpt.metadata = to_json(info).dump();
  ckpt.entries = nn::parameter_entries(model.parameters());
  auto opt = nn::optimizer_entries(model.parameters(), optimizer);
  ckpt.entries.insert(ckpt.entries.end(), std::make_move_iterator(opt.begin()), std::make_move_iterator(opt.end()));
  return nn::encode_checkpoint(ckpt);
}

struct LoadedModel {
  CheckpointInfo info;
  std::unique_ptr<model::EscapeModel<float>> model;
};

/// Rebuilds the model described by the checkpoint metadata and loads its
/// weights. A different toolkit version is a CheckpointMismatch.
inline LoadedModel load_model_checkpoint(std::string_view bytes) {
  const auto ckpt = nn::decode_checkpoint(bytes);
  LoadedModel out;
  out.info = checkpoint_info_from_json(ckpt.metadata);
  if (out.info.toolkit_version != kToolkitVersion)
    throw Error(ErrorCode::kCheckpointMismatch, "checkpoint written by toolkit " + out.info.toolkit_version +
                                                    ", this is " + std::string(kToolkitVersion));
  try {
    out.model = std::make_unique<model::EscapeModel<float>>(out.info.model, 0);
  } catch (const Error& e) {
    throw Error(ErrorCode::kCheckpointMismatch, std::string("checkpoint model config invalid: ") + e.what());
  }
  nn::load_parameters(out.model->parameters(), ckpt);
  return out;
}

}  // namespace escape::pipeline
