#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "witchstack/common/bytes.hpp"
#include "witchstack/ike/types.hpp"

namespace witchstack::ike {

enum class LdmTlvType : std::uint8_t {
  Hello = 1,
  UpdateWiFiAddressIPv6 = 2,
  UpdateWiFiAddressIPv4 = 3,
  UpdateWiFiSignature = 4,
  PreferWiFi = 5,
  DeviceLinkState = 6,
  PreferWiFiAck = 7,
  ForceWoW = 8,
};

std::string_view ldm_tlv_name(std::uint8_t type) noexcept;

constexpr std::uint8_t kLdmVersion = 2;
constexpr std::size_t kLdmHeaderSize = 16;
constexpr std::uint8_t kLinkStateBluetooth = 1;
constexpr std::uint8_t kLinkStateWifi = 2;

struct LdmTlv {
  std::uint8_t type = 0;
  Bytes value;
  friend bool operator==(const LdmTlv&, const LdmTlv&) = default;
};

struct LinkDirectorMessage {
  std::uint8_t version = kLdmVersion;
  std::array<std::uint8_t, 8> identifier{};
  std::vector<LdmTlv> tlvs;
  friend bool operator==(const LinkDirectorMessage&, const LinkDirectorMessage&) = default;
};

// Throws MalformedTlv when a value does not fit its type.
void validate_ldm_tlv(const LdmTlv& tlv);

// Notify data for type 50702.
Bytes ldm_encode(const LinkDirectorMessage& ldm);
// Errors: BadVersion, LengthMismatch, MalformedTlv.
LinkDirectorMessage ldm_decode(ByteView data);

LdmTlv address_tlv(const WifiAddress& addr);
std::optional<WifiAddress> tlv_address(const LdmTlv& tlv);

}  // namespace witchstack::ike
