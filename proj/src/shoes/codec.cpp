#include "witchstack/shoes/codec.hpp"

#include <arpa/inet.h>

#include <algorithm>

namespace witchstack::shoes {

namespace {

void check_ascii(const std::string& s) {
  if (s.empty() || s.size() > 255) throw Error(Errc::Malformed, "name length");
  if (!std::all_of(s.begin(), s.end(), [](char c) { return c > 0x20 && c < 0x7f; }))
    throw Error(Errc::Malformed, "non-ascii name");
}

void write_tlv(ByteWriter& w, std::uint8_t type, ByteView value) {
  w.u8(type).u16(static_cast<std::uint16_t>(value.size())).raw(value);
}

}  // namespace

RequestType request_type_of(const Destination& d) {
  switch (d.index()) {
    case 0: return RequestType::Hostname;
    case 1: return RequestType::Ipv4;
    case 2: return RequestType::Ipv6;
    default: return RequestType::Bonjour;
  }
}

std::string destination_host(const Destination& d) {
  if (auto* h = std::get_if<Hostname>(&d)) return h->name;
  if (auto* b = std::get_if<Bonjour>(&d)) return b->name;
  char buf[INET6_ADDRSTRLEN] = {};
  if (auto* v4 = std::get_if<Ipv4Addr>(&d)) inet_ntop(AF_INET, v4->data(), buf, sizeof buf);
  else inet_ntop(AF_INET6, std::get<Ipv6Addr>(d).data(), buf, sizeof buf);
  return buf;
}

Bytes shoes_encode_request(const ShoesRequest& r) {
  ByteWriter w;
  w.u16(0).u8(static_cast<std::uint8_t>(r.request_type())).u16(r.port);
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, Hostname> || std::is_same_v<T, Bonjour>) {
          check_ascii(d.name);
          w.u8(static_cast<std::uint8_t>(d.name.size())).raw(d.name);
        } else {
          w.raw(d);
        }
      },
      r.destination);
  if (r.process_name) {
    if (r.process_name->size() > 0xFFFF) throw Error(Errc::Malformed, "process name");
    write_tlv(w, tlv::kProcessName, to_bytes(*r.process_name));
  }
  if (r.condition_flags) {
    if (*r.condition_flags & (netflag::kDenied | netflag::kReserved))
      throw Error(Errc::ReservedBitsSet, "condition flags");
    write_tlv(w, tlv::kConditionFlags, Bytes{*r.condition_flags});
  }
  if (w.size() - 2 > 0xFFFF) throw Error(Errc::Malformed, "request too long");
  w.patch_u16(0, static_cast<std::uint16_t>(w.size() - 2));
  return w.take();
}

ShoesRequest shoes_decode_request(ByteView wire) {
  ByteReader r(wire);
  auto len = r.u16();
  if (len != r.remaining()) throw Error(Errc::Malformed, "declared length differs");
  auto type = r.u8();
  ShoesRequest out;
  out.port = r.u16();
  switch (type) {
    case static_cast<std::uint8_t>(RequestType::Hostname):
    case static_cast<std::uint8_t>(RequestType::Bonjour): {
      auto name = r.string(r.u8());
      check_ascii(name);
      if (type == static_cast<std::uint8_t>(RequestType::Hostname)) out.destination = Hostname{name};
      else out.destination = Bonjour{name};
      break;
    }
    case static_cast<std::uint8_t>(RequestType::Ipv4): {
      Ipv4Addr a;
      auto v = r.view(4);
      std::copy(v.begin(), v.end(), a.begin());
      out.destination = a;
      break;
    }
    case static_cast<std::uint8_t>(RequestType::Ipv6): {
      Ipv6Addr a;
      auto v = r.view(16);
      std::copy(v.begin(), v.end(), a.begin());
      out.destination = a;
      break;
    }
    default:
      throw Error(Errc::UnknownRequestType, std::to_string(type));
  }
  while (!r.empty()) {
    auto t = r.u8();
    auto value = r.view(r.u16());
    if (t == tlv::kProcessName) {
      out.process_name = to_string(value);
    } else if (t == tlv::kConditionFlags) {
      if (value.size() != 1) throw Error(Errc::Malformed, "condition flags width");
      if (value[0] & (netflag::kDenied | netflag::kReserved))
        throw Error(Errc::ReservedBitsSet, "condition flags");
      out.condition_flags = value[0];
    }
  }
  return out;
}

Bytes shoes_encode_reply(const ShoesReply& r) {
  if (r.network_info_flags & netflag::kReserved) throw Error(Errc::ReservedBitsSet, "reply flags");
  ByteWriter w(kReplySize);
  w.u16(kReplyLength).u8(r.domain).u8(r.code).u8(tlv::kNetworkInfo).u16(1).u8(r.network_info_flags);
  return w.take();
}

ShoesReply shoes_decode_reply(ByteView wire) {
  if (wire.size() != kReplySize) throw Error(Errc::Malformed, "reply size");
  ByteReader r(wire);
  if (r.u16() != kReplyLength) throw Error(Errc::Malformed, "reply length");
  ShoesReply out;
  out.domain = r.u8();
  out.code = r.u8();
  if (r.u8() != tlv::kNetworkInfo || r.u16() != 1) throw Error(Errc::Malformed, "network info tlv");
  out.network_info_flags = r.u8();
  if (out.network_info_flags & netflag::kReserved) throw Error(Errc::ReservedBitsSet, "reply flags");
  return out;
}

ShoesReply allowed_reply(std::uint8_t network_flags) {
  return ShoesReply{domain::kSuccess, code::kOk,
                    static_cast<std::uint8_t>(network_flags & ~(netflag::kDenied | netflag::kReserved))};
}

ShoesReply denied_reply(std::uint8_t c) { return ShoesReply{domain::kProxy, c, netflag::kDenied}; }

}  // namespace witchstack::shoes
