#include "witchstack/ike/ldm.hpp"

#include "witchstack/common/error.hpp"

namespace witchstack::ike {

std::string_view ldm_tlv_name(std::uint8_t type) noexcept {
  switch (type) {
    case 1: return "Hello";
    case 2: return "UpdateWiFiAddressIPv6";
    case 3: return "UpdateWiFiAddressIPv4";
    case 4: return "UpdateWiFiSignature";
    case 5: return "PreferWiFi";
    case 6: return "DeviceLinkState";
    case 7: return "PreferWiFiAck";
    case 8: return "ForceWoW";
    default: return "unknown";
  }
}

void validate_ldm_tlv(const LdmTlv& tlv) {
  auto fail = [&](const char* why) {
    throw Error(Errc::MalformedTlv, std::string(ldm_tlv_name(tlv.type)) + ": " + why);
  };
  switch (static_cast<LdmTlvType>(tlv.type)) {
    case LdmTlvType::Hello:
    case LdmTlvType::PreferWiFi:
    case LdmTlvType::ForceWoW:
      if (!tlv.value.empty()) fail("expected empty value");
      return;
    case LdmTlvType::UpdateWiFiAddressIPv6:
      if (tlv.value.size() != 18) fail("expected port and 16 byte address");
      return;
    case LdmTlvType::UpdateWiFiAddressIPv4:
      if (tlv.value.size() != 6) fail("expected port and 4 byte address");
      return;
    case LdmTlvType::UpdateWiFiSignature:
      return;
    case LdmTlvType::DeviceLinkState:
      if (tlv.value.size() != 1 ||
          (tlv.value[0] != kLinkStateBluetooth && tlv.value[0] != kLinkStateWifi))
        fail("expected 1 or 2");
      return;
    case LdmTlvType::PreferWiFiAck:
      if (tlv.value.size() != 1 || tlv.value[0] > 1) fail("expected boolean byte");
      return;
  }
  fail("type out of range");
}

Bytes ldm_encode(const LinkDirectorMessage& ldm) {
  if (ldm.version != kLdmVersion) throw Error(Errc::BadVersion);
  ByteWriter tlvs;
  for (const auto& t : ldm.tlvs) {
    validate_ldm_tlv(t);
    tlvs.u8(t.type);
    tlvs.u16(static_cast<std::uint16_t>(t.value.size()));
    tlvs.raw(t.value);
  }
  Bytes body = tlvs.take();
  if (body.size() > 0xFFFF) throw Error(Errc::LengthMismatch, "tlvs too long");
  ByteWriter w;
  w.u8(ldm.version);
  w.u8(0);
  w.u16(static_cast<std::uint16_t>(body.size()));
  w.u32(0);
  w.raw(ldm.identifier);
  w.raw(body);
  return w.take();
}

LinkDirectorMessage ldm_decode(ByteView data) {
  if (data.empty()) throw Error(Errc::LengthMismatch, "empty");
  LinkDirectorMessage ldm;
  ldm.version = data[0];
  if (ldm.version != kLdmVersion) throw Error(Errc::BadVersion, std::to_string(ldm.version));
  ByteReader r(data, Errc::LengthMismatch);
  r.u8();
  std::uint8_t pad = r.u8();
  std::uint16_t tlv_len = r.u16();
  std::uint32_t zeros = r.u32();
  if (pad != 0 || zeros != 0) throw Error(Errc::MalformedTlv, "reserved bytes");
  auto id = r.view(8);
  std::copy(id.begin(), id.end(), ldm.identifier.begin());
  if (r.remaining() != tlv_len)
    throw Error(Errc::LengthMismatch, "tlv length " + std::to_string(tlv_len) + " vs " +
                                          std::to_string(r.remaining()));
  ByteReader t(r.rest(), Errc::MalformedTlv);
  while (!t.empty()) {
    LdmTlv tlv;
    tlv.type = t.u8();
    tlv.value = t.bytes(t.u16());
    validate_ldm_tlv(tlv);
    ldm.tlvs.push_back(std::move(tlv));
  }
  return ldm;
}

LdmTlv address_tlv(const WifiAddress& addr) {
  ByteWriter w;
  w.u16(addr.port);
  if (addr.is_v6) {
    w.raw(addr.ip);
    return {static_cast<std::uint8_t>(LdmTlvType::UpdateWiFiAddressIPv6), w.take()};
  }
  w.raw(ByteView(addr.ip.data(), 4));
  return {static_cast<std::uint8_t>(LdmTlvType::UpdateWiFiAddressIPv4), w.take()};
}

std::optional<WifiAddress> tlv_address(const LdmTlv& tlv) {
  WifiAddress a;
  if (tlv.type == static_cast<std::uint8_t>(LdmTlvType::UpdateWiFiAddressIPv6) &&
      tlv.value.size() == 18) {
    a.is_v6 = true;
    std::copy(tlv.value.begin() + 2, tlv.value.end(), a.ip.begin());
  } else if (tlv.type == static_cast<std::uint8_t>(LdmTlvType::UpdateWiFiAddressIPv4) &&
             tlv.value.size() == 6) {
    std::copy(tlv.value.begin() + 2, tlv.value.end(), a.ip.begin());
  } else {
    return std::nullopt;
  }
  a.port = static_cast<std::uint16_t>(tlv.value[0] << 8 | tlv.value[1]);
  return a;
}

}  // namespace witchstack::ike
