#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "witchstack/common/bytes.hpp"
#include "witchstack/common/stream.hpp"

namespace witchstack::alloy {

enum class ControlType : std::uint8_t {
  Hello = 1,
  SetupChannel = 2,
  CloseChannel = 3,
  CompressionRequest = 4,
  CompressionResponse = 5,
  SetupEncryptedChannel = 6,
  FairplayHostSessionInfo = 7,
  FairplayDeviceInfo = 8,
  FairplayDeviceSessionInfo = 9,
  OtrNegotiationMessage = 10,
  EncryptControlChannel = 11,
  SuspendOtrNegotiationMsg = 12,
  // Local extension: reply to the unsupported types above.
  UnsupportedFeature = 0xFF,
};

std::string_view control_type_name(std::uint8_t t) noexcept;
bool is_table_control_type(std::uint8_t t) noexcept;

constexpr std::uint16_t kControlPort = 61315;
constexpr std::uint16_t kDataPort = 61314;
constexpr std::string_view kDefaultAccount = "idstest";
constexpr std::string_view kDefaultService = "localdelivery";

enum class Urgency : std::uint8_t { Default = 0, Urgent = 1 };

struct ChannelDescriptor {
  std::string account = std::string(kDefaultAccount);
  std::string service = std::string(kDefaultService);
  std::string name;
  Uuid channel_uuid{};
  std::uint16_t tcp_port = kDataPort;
  char protection_class = 'C';
  Urgency urgency = Urgency::Default;

  friend bool operator==(const ChannelDescriptor&, const ChannelDescriptor&) = default;
};

// UTunDelivery-Default-<Default|Urgent>-<C|D>
std::string channel_name(char protection_class, Urgency urgency);
ChannelDescriptor make_descriptor(char protection_class, Urgency urgency);

struct ControlMessage {
  std::uint8_t msg_type = 0;
  Bytes body;
  friend bool operator==(const ControlMessage&, const ControlMessage&) = default;
};

Bytes control_encode(const ControlMessage& m);
ControlMessage control_decode(ByteView wire);

struct Hello {
  std::string version = "1.0";
  std::string device_id;
  std::uint32_t features = 0;
  std::uint16_t setup_count = 0;  // SetupChannel messages that follow
  friend bool operator==(const Hello&, const Hello&) = default;
};

Bytes encode_hello(const Hello& h);
Hello decode_hello(ByteView body);
Bytes encode_setup(const ChannelDescriptor& d);
ChannelDescriptor decode_setup(ByteView body);
Bytes encode_close(const Uuid& channel);
Uuid decode_close(ByteView body);

// Major component of "major.minor".
int version_major(const std::string& v);

}  // namespace witchstack::alloy
