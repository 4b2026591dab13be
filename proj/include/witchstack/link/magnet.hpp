#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "witchstack/common/bytes.hpp"

namespace witchstack::link {

enum class MagnetOpcode : std::uint8_t {
  RemoteServices = 0x01,
  RemoteServicesResponse = 0x02,
  CreateChannel = 0x03,
  AcceptChannel = 0x04,
  ServiceAdded = 0x05,
  ServiceRemoved = 0x06,
  ServiceRemovedAck = 0x07,
  ErrorResponse = 0x08,
  VersionInfo = 0x09,
  TimeSyncCorrection = 0x70,
  TimeData = 0x71,
  TimeData2 = 0x72,
  DidInfo = 0x90,
  ClData = 0x91,
};

bool is_known_magnet_opcode(std::uint8_t opcode) noexcept;
std::string_view magnet_opcode_name(std::uint8_t opcode) noexcept;

struct MagnetMessage {
  std::uint8_t opcode = 0;
  Bytes body;

  friend bool operator==(const MagnetMessage&, const MagnetMessage&) = default;
};

Bytes magnet_encode(const MagnetMessage& msg);
// Throws UnknownOpcode for opcodes outside the table, Malformed when empty.
MagnetMessage magnet_decode(ByteView bytes);

// Bodies of the service-negotiation exchange. These are our own layout; the
// opcodes are the only part taken from the observed protocol.
//   CreateChannel: len(1) | service name
//   AcceptChannel: len(1) | service name | channel id(1)
//   ErrorResponse: reason(1) | len(1) | service name
struct ChannelRequest {
  std::string service;
};
struct ChannelAccept {
  std::string service;
  std::uint8_t channel_id = 0;
};
struct ChannelError {
  std::uint8_t reason = 0;
  std::string service;
};

constexpr std::uint8_t kMagnetErrorUnknownService = 0x01;

MagnetMessage encode_channel_request(const ChannelRequest& r);
MagnetMessage encode_channel_accept(const ChannelAccept& a);
MagnetMessage encode_channel_error(const ChannelError& e);
ChannelRequest decode_channel_request(const MagnetMessage& m);
ChannelAccept decode_channel_accept(const MagnetMessage& m);
ChannelError decode_channel_error(const MagnetMessage& m);

}  // namespace witchstack::link
