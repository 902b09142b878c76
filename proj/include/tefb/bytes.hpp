#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tefb/error.hpp"

namespace tefb {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::uint64_t fnv1a64(ByteView data);
std::uint64_t fnv1a64(std::string_view s);
std::uint32_t fnv1a32(std::string_view s);

inline constexpr std::uint64_t kFnv64OffsetBasis = 0xcbf29ce484222325ULL;

/// Little-endian append-only writer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f32(float v);
  void bytes(ByteView v) { buf_.insert(buf_.end(), v.begin(), v.end()); }
  void str(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void zeros(std::size_t n) { buf_.insert(buf_.end(), n, 0); }

  std::size_t size() const { return buf_.size(); }
  Bytes& buffer() { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

/// Bounds-checked little-endian reader. Reads past the end throw
/// ParseError(TruncatedFile) at the offending offset.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  float f32();
  ByteView take(std::size_t n);
  std::string str(std::size_t n);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;

  ByteView data_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::string& path);
void write_file(const std::string& path, ByteView data);

}  // namespace tefb
