#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <utility>
#include <string>
#include <string_view>
#include <vector>

#include "invshape/core/error.hpp"

namespace invshape::io {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> bytes_;
};

/// Little-endian byte source with bounds checks.
class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    if (std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
      fail<FormatError>(what_, ": bad magic, expected '", m, "'");
    pos_ += m.size();
  }
  bool peek_magic(std::string_view m) const {
    return remaining() >= m.size() &&
           std::memcmp(bytes_.data() + pos_, m.data(), m.size()) == 0;
  }
  std::uint32_t u32(const char* field = "u32") { return static_cast<std::uint32_t>(get(4, field)); }
  std::uint64_t u64(const char* field = "u64") { return get(8, field); }
  float f32(const char* field = "f32") {
    return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, field)));
  }
  double f64(const char* field = "f64") { return std::bit_cast<double>(get(8, field)); }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::string& what() const { return what_; }

  void need(std::size_t n, const char* field) const {
    if (remaining() < n)
      fail<FormatError>(what_, ": truncated while reading ", field, " at byte ", pos_);
  }

 private:
  std::uint64_t get(int n, const char* field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<unsigned char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail<ConfigError>("cannot open '", path.string(), "' for reading");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail<ConfigError>("cannot open '", path.string(), "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail<ConfigError>("short write to '", path.string(), "'");
}

inline std::uint64_t fnv1a(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace invshape::io
