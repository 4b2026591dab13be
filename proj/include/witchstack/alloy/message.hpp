#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "witchstack/common/bytes.hpp"
#include "witchstack/common/stream.hpp"

namespace witchstack::alloy {

// Data-plane message types.
enum class MessageType : std::uint8_t {
  Data = 0x00,
  Ack = 0x01,
  ExpiredAck = 0x02,
  Dictionary = 0x03,
  Protobuf = 0x04,
  ResourceTransfer = 0x05,
};

std::string_view message_type_name(std::uint8_t t) noexcept;

namespace flag {
constexpr std::uint8_t kTopic = 0x10;
constexpr std::uint8_t kExpiry = 0x08;
constexpr std::uint8_t kWantsAppAck = 0x04;
constexpr std::uint8_t kCompressed = 0x02;
constexpr std::uint8_t kExpectsPeerResponse = 0x01;
constexpr std::uint8_t kReservedMask = 0xE0;
}  // namespace flag

constexpr std::size_t kAlloyPrefixSize = 5;  // type + length
constexpr std::uint16_t kAckStream = 0;

struct AlloyMessage {
  std::uint8_t msg_type = 0;
  std::uint32_t sequence = 0;
  std::uint16_t stream = 0;
  bool wants_app_ack = false;
  bool compressed = false;
  bool expects_peer_response = false;
  std::string response_identifier;     // empty when absent
  std::string message_uuid;
  std::optional<std::string> topic;    // TOP
  Bytes payload;
  std::optional<std::uint32_t> expiry; // EXP, seconds since 2001-01-01

  std::uint8_t flags() const noexcept;
  friend bool operator==(const AlloyMessage&, const AlloyMessage&) = default;
};

Bytes alloy_encode(const AlloyMessage& m);
// Exactly one message. Errors: FlagFieldReservedBitsSet, LengthMismatch,
// TopicMissing.
AlloyMessage alloy_decode(ByteView wire);

// Total size of the message starting at `prefix` (5 bytes needed).
std::size_t alloy_frame_size(ByteView prefix);

// Reads one type(1) | length(4) | body frame. nullopt on clean end of stream.
std::optional<Bytes> read_frame(ByteStream& s, std::optional<std::chrono::milliseconds> timeout = std::nullopt);

constexpr std::int64_t kAppleEpochUnix = 978307200;
std::uint32_t apple_time_now();
std::uint32_t to_apple_time(std::int64_t unix_seconds);

std::string new_uuid_text();

Bytes deflate(ByteView data);
// Throws Malformed.
Bytes inflate(ByteView data);

}  // namespace witchstack::alloy
