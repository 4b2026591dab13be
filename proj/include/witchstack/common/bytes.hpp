#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "witchstack/common/error.hpp"

namespace witchstack {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_string(ByteView b);

std::string to_hex(ByteView b);
// Throws Error(Malformed) on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline void append(Bytes& out, ByteView data) {
  out.insert(out.end(), data.begin(), data.end());
}

// Big-endian writer. All multi-byte integers on the wire in this project are
// network order.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::size_t reserve) { buf_.reserve(reserve); }

  ByteWriter& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }
  ByteWriter& u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v));
    return *this;
  }
  ByteWriter& u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8)
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  ByteWriter& f64(double v);
  ByteWriter& raw(ByteView data) {
    append(buf_, data);
    return *this;
  }
  ByteWriter& raw(std::string_view s) {
    buf_.insert(buf_.end(), s.begin(), s.end());
    return *this;
  }
  // Writes a big-endian u16 at an absolute offset (for back-patched lengths).
  void patch_u16(std::size_t offset, std::uint16_t v) {
    buf_.at(offset) = static_cast<std::uint8_t>(v >> 8);
    buf_.at(offset + 1) = static_cast<std::uint8_t>(v);
  }
  void patch_u32(std::size_t offset, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
      buf_.at(offset + i) = static_cast<std::uint8_t>(v >> (24 - 8 * i));
  }

  std::size_t size() const noexcept { return buf_.size(); }
  const Bytes& bytes() const& noexcept { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

// Big-endian bounds-checked reader. Running off the end throws the error code
// chosen at construction so each codec reports its own failure kind.
class ByteReader {
 public:
  explicit ByteReader(ByteView data, Errc on_short = Errc::Malformed)
      : data_(data), on_short_(on_short) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t u32() {
    auto b = take(4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (auto x : b) v = (v << 8) | x;
    return v;
  }
  double f64();
  ByteView view(std::size_t n) { return take(n); }
  Bytes bytes(std::size_t n) {
    auto v = take(n);
    return Bytes(v.begin(), v.end());
  }
  std::string string(std::size_t n) {
    auto v = take(n);
    return std::string(v.begin(), v.end());
  }
  ByteView rest() { return take(remaining()); }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }
  bool empty() const noexcept { return remaining() == 0; }

 private:
  ByteView take(std::size_t n) {
    if (n > remaining())
      throw Error(on_short_, "need " + std::to_string(n) + " bytes, have " +
                                 std::to_string(remaining()));
    auto v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

  ByteView data_;
  std::size_t pos_ = 0;
  Errc on_short_;
};

using Uuid = std::array<std::uint8_t, 16>;

std::string uuid_to_string(const Uuid& u);

}  // namespace witchstack
