#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "witchstack/common/bytes.hpp"

namespace witchstack::link {

// NRLP payload types. Values below 0x64 use the RFC 1071 checksum, the rest
// use the XOR header checksum.
enum class NrlpType : std::uint8_t {
  Pad0 = 0x00,
  PadN = 0x01,
  UncompressedIp = 0x02,
  Encapsulated6LoWPAN = 0x03,
  IkeV2 = 0x04,
  Echo = 0x05,
  Esp = 0x64,
  EspEct0 = 0x65,
  Tcp = 0x66,
  TcpEct0 = 0x67,
  EspClassC = 0x68,
  EspClassCEct0 = 0x69,
};

constexpr std::uint8_t kXorChecksumThreshold = 0x64;
constexpr std::size_t kNrlpHeaderSize = 3;
constexpr std::size_t kNrlpOverhead = 5;

bool is_known_nrlp_type(std::uint8_t type) noexcept;
std::string_view nrlp_type_name(std::uint8_t type) noexcept;

struct NrlpFrame {
  std::uint8_t type = 0;
  Bytes payload;
  std::uint16_t checksum = 0;

  friend bool operator==(const NrlpFrame&, const NrlpFrame&) = default;
};

// One's-complement sum of big-endian 16-bit words, odd trailing byte padded
// with zero, complemented.
std::uint16_t internet_checksum(ByteView data) noexcept;

// `covered` is only consulted for the RFC 1071 regime; for types >= 0x64 the
// checksum depends on type and length alone.
std::uint16_t nrlp_checksum(std::uint8_t frame_type, std::uint16_t length,
                            ByteView covered) noexcept;

// Frame with its checksum filled in.
NrlpFrame make_nrlp_frame(std::uint8_t type, Bytes payload);

Bytes nrlp_encode(const NrlpFrame& frame);

struct NrlpDecoded {
  NrlpFrame frame;
  std::size_t consumed = 0;
};

struct NrlpDecodeOptions {
  bool reject_unknown_types = false;
};

// Decodes the first frame in `bytes`. Throws TruncatedFrame when more input
// is needed, ChecksumMismatch on corruption, UnknownType in strict mode.
NrlpDecoded nrlp_decode(ByteView bytes, NrlpDecodeOptions options = {});

// Reassembles frames from a byte stream delivered in arbitrary pieces.
// Corrupt frames are dropped and counted.
class NrlpStreamDecoder {
 public:
  explicit NrlpStreamDecoder(NrlpDecodeOptions options = {}) : options_(options) {}

  void feed(ByteView piece) { append(buffer_, piece); }
  // Next complete frame, or nullopt when the buffered bytes end mid-frame.
  std::optional<NrlpFrame> next();

  std::size_t buffered() const noexcept { return buffer_.size(); }
  std::uint64_t checksum_failures() const noexcept { return checksum_failures_; }
  std::uint64_t unknown_type_drops() const noexcept { return unknown_drops_; }

 private:
  NrlpDecodeOptions options_;
  Bytes buffer_;
  std::uint64_t checksum_failures_ = 0;
  std::uint64_t unknown_drops_ = 0;
};

// The echo service answers pings (first byte 0x01) with a pong (0x02) and an
// otherwise identical payload. Any other frame yields NotAPing.
NrlpFrame echo_service(const NrlpFrame& frame);

}  // namespace witchstack::link
