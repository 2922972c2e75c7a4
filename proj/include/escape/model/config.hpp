#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "escape/core/error.hpp"
#include "json.hpp"

namespace escape::model {

enum class Mode { kSequenceOnly, kStructureOnly, kBoth };

constexpr std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kSequenceOnly: return "sequence_only";
    case Mode::kStructureOnly: return "structure_only";
    case Mode::kBoth: return "both";
  }
  return "both";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "sequence_only") return Mode::kSequenceOnly;
  if (s == "structure_only") return Mode::kStructureOnly;
  if (s == "both") return Mode::kBoth;
  throw Error(ErrorCode::kUsage, "unknown mode '" + std::string(s) + "' (sequence_only, structure_only, both)");
}

inline bool uses_sequence(Mode m) { return m != Mode::kStructureOnly; }
inline bool uses_structure(Mode m) { return m != Mode::kSequenceOnly; }

struct ModelConfig {
  std::int64_t seq_len = 200;
  std::int64_t vocab = 27;
  std::int64_t seq_dim = 256;
  std::int64_t struct_dim = 192;
  std::int64_t layers = 4;
  std::int64_t heads = 8;
  std::int64_t patch = 16;
  std::int64_t image_side = 224;
  std::int64_t num_classes = 5;
  std::int64_t fusion_dim = 256;
  std::int64_t ffn_mult = 4;
  double dropout = 0.1;
  Mode mode = Mode::kBoth;

  std::int64_t patches() const { return (image_side / patch) * (image_side / patch); }
  std::int64_t head_width() const {
    switch (mode) {
      case Mode::kSequenceOnly: return seq_dim;
      case Mode::kStructureOnly: return struct_dim;
      case Mode::kBoth: return seq_dim + struct_dim;
    }
    return seq_dim + struct_dim;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw Error(ErrorCode::kUsage, "model config: " + what);
    };
    need(seq_len > 0 && vocab > 1 && num_classes > 0 && layers >= 0 && ffn_mult > 0, "sizes must be positive");
    need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
    need(patch > 0 && image_side % patch == 0, "image side must be divisible by patch");
    auto divides = [&](std::int64_t width, const char* name) {
      if (heads <= 0 || width % heads != 0)
        throw Error(ErrorCode::kHeadDivisibility, std::to_string(heads) + " heads do not divide " + name);
    };
    if (uses_sequence(mode)) divides(seq_dim, "seq_dim");
    if (uses_structure(mode)) divides(struct_dim, "struct_dim");
    if (mode == Mode::kBoth) divides(fusion_dim, "fusion_dim");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return nlohmann::ordered_json{{"seq_len", c.seq_len},     {"vocab", c.vocab},           {"seq_dim", c.seq_dim},
                                {"struct_dim", c.struct_dim}, {"layers", c.layers},         {"heads", c.heads},
                                {"patch", c.patch},         {"image_side", c.image_side}, {"num_classes", c.num_classes},
                                {"fusion_dim", c.fusion_dim}, {"ffn_mult", c.ffn_mult},     {"dropout", c.dropout},
                                {"mode", std::string(to_string(c.mode))}};
}

/// Reads a (possibly partial) model section; absent keys keep `base` values.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("seq_len", base.seq_len);
  get("vocab", base.vocab);
  get("seq_dim", base.seq_dim);
  get("struct_dim", base.struct_dim);
  get("layers", base.layers);
  get("heads", base.heads);
  get("patch", base.patch);
  get("image_side", base.image_side);
  get("num_classes", base.num_classes);
  get("fusion_dim", base.fusion_dim);
  get("ffn_mult", base.ffn_mult);
  get("dropout", base.dropout);
  if (j.contains("mode")) base.mode = parse_mode(j.at("mode").get<std::string>());
  return base;
}

}  // namespace escape::model
