#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "escape/core/error.hpp"

namespace escape {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(v); }
  void raw(std::string_view bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }
  void text(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  const std::string& bytes() const { return buffer_; }

 private:
  template <class V>
  void put(V v) {
    char tmp[sizeof(V)];
    std::memcpy(tmp, &v, sizeof(V));
    buffer_.append(tmp, sizeof(V));
  }

  std::string buffer_;
};

/// Bounds-checked reader over a byte buffer; truncation raises kParseError.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto out = bytes_.substr(offset_, n);
    offset_ += n;
    return out;
  }
  std::string text() { return std::string(raw(u32())); }

  bool done() const { return offset_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - offset_ < n) throw Error(ErrorCode::kParseError, "truncated binary payload");
  }
  template <class V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + offset_, sizeof(V));
    offset_ += sizeof(V);
    return v;
  }

  std::string_view bytes_;
  std::size_t offset_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace escape
