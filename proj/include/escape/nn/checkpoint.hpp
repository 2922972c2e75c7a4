#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "escape/core/binary_io.hpp"
#include "escape/nn/adamw.hpp"
#include "escape/nn/tensor.hpp"

namespace escape::nn {

// Layout (little-endian):
//   "ESCK" | u16 format version | u32 len + UTF-8 metadata (JSON text)
//   | u32 entry count | entries
// entry: u32 len + name | u32 rank | u32 dims[rank] | float32 data[prod(dims)]
// Optimizer state is stored as extra entries named "<param>.adam_m",
// "<param>.adam_v" and "optimizer.step".

inline constexpr char kCheckpointMagic[4] = {'E', 'S', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string metadata;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, 4));
  w.u16(kCheckpointVersion);
  w.text(ckpt.metadata);
  w.u32(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    w.text(e.name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : e.data) w.f32(v);
  }
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(4) != std::string_view(kCheckpointMagic, 4))
    throw Error(ErrorCode::kCheckpointMismatch, "not a checkpoint (bad magic)");
  if (const auto version = r.u16(); version != kCheckpointVersion)
    throw Error(ErrorCode::kCheckpointMismatch, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.metadata = r.text();
  const auto count = r.u32();
  ckpt.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.text();
    const auto rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32());
    e.data.resize(static_cast<std::size_t>(numel(e.shape)));
    for (auto& v : e.data) v = r.f32();
    ckpt.entries.push_back(std::move(e));
  }
  if (!r.done()) throw Error(ErrorCode::kParseError, "trailing bytes after checkpoint entries");
  return ckpt;
}

template <class T>
std::vector<CheckpointEntry> parameter_entries(const ParameterStore<T>& params) {
  std::vector<CheckpointEntry> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    out.push_back({p.name, p.value.shape(), std::vector<float>(p.value.values().begin(), p.value.values().end())});
  }
  return out;
}

template <class T>
std::vector<CheckpointEntry> optimizer_entries(const ParameterStore<T>& params, const AdamW<T>& opt) {
  std::vector<CheckpointEntry> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const auto& m = opt.first_moment(i);
    const auto& v = opt.second_moment(i);
    out.push_back({p.name + ".adam_m", p.value.shape(), std::vector<float>(m.begin(), m.end())});
    out.push_back({p.name + ".adam_v", p.value.shape(), std::vector<float>(v.begin(), v.end())});
  }
  out.push_back({"optimizer.step", {1}, {static_cast<float>(opt.steps())}});
  return out;
}

/// Copies entries into same-named parameters; any missing name or shape
/// difference is a CheckpointMismatch.
template <class T>
void load_parameters(ParameterStore<T>& params, const Checkpoint& ckpt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto* e = ckpt.find(p.name);
    if (!e) throw Error(ErrorCode::kCheckpointMismatch, "checkpoint lacks parameter " + p.name);
    if (e->shape != p.value.shape())
      throw Error(ErrorCode::kCheckpointMismatch,
                  p.name + " has shape " + shape_str(e->shape) + ", model expects " + shape_str(p.value.shape()));
    std::copy(e->data.begin(), e->data.end(), p.value.values().begin());
  }
}

}  // namespace escape::nn
