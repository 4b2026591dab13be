#include "witchstack/link/magnet.hpp"

namespace witchstack::link {

bool is_known_magnet_opcode(std::uint8_t opcode) noexcept {
  return (opcode >= 0x01 && opcode <= 0x09) || (opcode >= 0x70 && opcode <= 0x72) ||
         opcode == 0x90 || opcode == 0x91;
}

std::string_view magnet_opcode_name(std::uint8_t opcode) noexcept {
  switch (opcode) {
    case 0x01: return "remote services";
    case 0x02: return "remote services response";
    case 0x03: return "create channel for service";
    case 0x04: return "accept channel for service";
    case 0x05: return "service added";
    case 0x06: return "service removed";
    case 0x07: return "service removed acknowledge";
    case 0x08: return "error response";
    case 0x09: return "version info";
    case 0x70: return "send time sync correction";
    case 0x71: return "time data";
    case 0x72: return "time data";
    case 0x90: return "DID info";
    case 0x91: return "CL data";
    default: return "unknown";
  }
}

Bytes magnet_encode(const MagnetMessage& msg) {
  if (!is_known_magnet_opcode(msg.opcode))
    throw Error(Errc::UnknownOpcode, std::to_string(msg.opcode));
  Bytes out;
  out.reserve(msg.body.size() + 1);
  out.push_back(msg.opcode);
  append(out, msg.body);
  return out;
}

MagnetMessage magnet_decode(ByteView bytes) {
  if (bytes.empty()) throw Error(Errc::Malformed, "empty magnet message");
  if (!is_known_magnet_opcode(bytes[0]))
    throw Error(Errc::UnknownOpcode, std::to_string(bytes[0]));
  return {bytes[0], Bytes(bytes.begin() + 1, bytes.end())};
}

namespace {
void put_name(ByteWriter& w, const std::string& name) {
  if (name.size() > 0xff) throw Error(Errc::Malformed, "service name too long");
  w.u8(static_cast<std::uint8_t>(name.size())).raw(name);
}

std::string get_name(ByteReader& r) { return r.string(r.u8()); }

void expect(const MagnetMessage& m, MagnetOpcode op) {
  if (m.opcode != static_cast<std::uint8_t>(op))
    throw Error(Errc::Malformed, "unexpected magnet opcode " + std::to_string(m.opcode));
}
}  // namespace

MagnetMessage encode_channel_request(const ChannelRequest& r) {
  ByteWriter w;
  put_name(w, r.service);
  return {static_cast<std::uint8_t>(MagnetOpcode::CreateChannel), std::move(w).take()};
}

MagnetMessage encode_channel_accept(const ChannelAccept& a) {
  ByteWriter w;
  put_name(w, a.service);
  w.u8(a.channel_id);
  return {static_cast<std::uint8_t>(MagnetOpcode::AcceptChannel), std::move(w).take()};
}

MagnetMessage encode_channel_error(const ChannelError& e) {
  ByteWriter w;
  w.u8(e.reason);
  put_name(w, e.service);
  return {static_cast<std::uint8_t>(MagnetOpcode::ErrorResponse), std::move(w).take()};
}

ChannelRequest decode_channel_request(const MagnetMessage& m) {
  expect(m, MagnetOpcode::CreateChannel);
  ByteReader r(m.body);
  return {get_name(r)};
}

ChannelAccept decode_channel_accept(const MagnetMessage& m) {
  expect(m, MagnetOpcode::AcceptChannel);
  ByteReader r(m.body);
  ChannelAccept a;
  a.service = get_name(r);
  a.channel_id = r.u8();
  return a;
}

ChannelError decode_channel_error(const MagnetMessage& m) {
  expect(m, MagnetOpcode::ErrorResponse);
  ByteReader r(m.body);
  ChannelError e;
  e.reason = r.u8();
  e.service = get_name(r);
  return e;
}

}  // namespace witchstack::link
