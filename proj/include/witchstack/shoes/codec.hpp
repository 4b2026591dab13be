#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>

#include "witchstack/common/bytes.hpp"

namespace witchstack::shoes {

constexpr std::uint16_t kShoesPort = 62742;

enum class RequestType : std::uint8_t { Hostname = 0x01, Ipv4 = 0x02, Ipv6 = 0x03, Bonjour = 0x04 };

namespace tlv {
constexpr std::uint8_t kProcessName = 0x01;
constexpr std::uint8_t kConditionFlags = 0x02;
constexpr std::uint8_t kNetworkInfo = 0x04;
}  // namespace tlv

// Network info bits, shared by reply flags and request conditions.
namespace netflag {
constexpr std::uint8_t kExpensive = 0x80;
constexpr std::uint8_t kCellular = 0x40;
constexpr std::uint8_t kWifi = 0x20;
constexpr std::uint8_t kConstrained = 0x10;
constexpr std::uint8_t kDenied = 0x08;
constexpr std::uint8_t kReserved = 0x07;
}  // namespace netflag

struct Hostname {
  std::string name;
  bool operator==(const Hostname&) const = default;
};
struct Bonjour {
  std::string name;
  bool operator==(const Bonjour&) const = default;
};
using Ipv4Addr = std::array<std::uint8_t, 4>;
using Ipv6Addr = std::array<std::uint8_t, 16>;
using Destination = std::variant<Hostname, Ipv4Addr, Ipv6Addr, Bonjour>;

RequestType request_type_of(const Destination& d);
// Hostname, dotted quad, or RFC 5952 style IPv6 text.
std::string destination_host(const Destination& d);

struct ShoesRequest {
  std::uint16_t port = 0;
  Destination destination = Hostname{};
  std::optional<std::string> process_name;
  // Network properties the requester accepts; absent means any.
  std::optional<std::uint8_t> condition_flags;
  bool operator==(const ShoesRequest&) const = default;

  RequestType request_type() const { return request_type_of(destination); }
};

// length(2) counts the bytes after itself.
Bytes shoes_encode_request(const ShoesRequest& r);
ShoesRequest shoes_decode_request(ByteView wire);

namespace domain {
constexpr std::uint8_t kSuccess = 0x00;
constexpr std::uint8_t kProxy = 0x01;
}  // namespace domain

namespace code {
constexpr std::uint8_t kOk = 0x00;
constexpr std::uint8_t kFirewall = 0x01;
constexpr std::uint8_t kConditions = 0x02;
constexpr std::uint8_t kDialFailure = 0x03;
constexpr std::uint8_t kUnsupported = 0x04;
}  // namespace code

struct ShoesReply {
  std::uint8_t domain = domain::kSuccess;
  std::uint8_t code = code::kOk;
  std::uint8_t network_info_flags = 0;
  bool operator==(const ShoesReply&) const = default;

  bool denied() const { return network_info_flags & netflag::kDenied; }
};

constexpr std::size_t kReplySize = 8;
constexpr std::uint16_t kReplyLength = 0x0006;

Bytes shoes_encode_reply(const ShoesReply& r);
ShoesReply shoes_decode_reply(ByteView wire);

ShoesReply allowed_reply(std::uint8_t network_flags);
ShoesReply denied_reply(std::uint8_t code);

}  // namespace witchstack::shoes
