#include "witchstack/alloy/control.hpp"

#include "witchstack/common/error.hpp"
#include "witchstack/crypto/crypto.hpp"

namespace witchstack::alloy {

std::string_view control_type_name(std::uint8_t t) noexcept {
  switch (t) {
    case 1: return "Hello";
    case 2: return "SetupChannel";
    case 3: return "CloseChannel";
    case 4: return "CompressionRequest";
    case 5: return "CompressionResponse";
    case 6: return "SetupEncryptedChannel";
    case 7: return "FairplayHostSessionInfo";
    case 8: return "FairplayDeviceInfo";
    case 9: return "FairplayDeviceSessionInfo";
    case 10: return "OTRNegotiationMessage";
    case 11: return "EncryptControlChannel";
    case 12: return "SuspendOTRNegotiationMsg";
    case 0xFF: return "UnsupportedFeature";
    default: return "unknown";
  }
}

bool is_table_control_type(std::uint8_t t) noexcept { return t >= 1 && t <= 12; }

std::string channel_name(char protection_class, Urgency urgency) {
  return std::string("UTunDelivery-Default-") + (urgency == Urgency::Urgent ? "Urgent" : "Default") +
         "-" + protection_class;
}

ChannelDescriptor make_descriptor(char protection_class, Urgency urgency) {
  ChannelDescriptor d;
  d.name = channel_name(protection_class, urgency);
  d.protection_class = protection_class;
  d.urgency = urgency;
  Bytes u = crypto::random_bytes(16);
  std::copy(u.begin(), u.end(), d.channel_uuid.begin());
  return d;
}

Bytes control_encode(const ControlMessage& m) {
  ByteWriter w;
  w.u8(m.msg_type);
  w.u32(static_cast<std::uint32_t>(m.body.size()));
  w.raw(m.body);
  return w.take();
}

ControlMessage control_decode(ByteView wire) {
  ByteReader r(wire, Errc::LengthMismatch);
  ControlMessage m;
  m.msg_type = r.u8();
  std::uint32_t len = r.u32();
  if (len != r.remaining()) throw Error(Errc::LengthMismatch, "control length");
  m.body = r.bytes(len);
  return m;
}

namespace {

void put_str(ByteWriter& w, std::string_view s) {
  if (s.size() > 0xFFFF) throw Error(Errc::PayloadTooLarge, "control string");
  w.u16(static_cast<std::uint16_t>(s.size()));
  w.raw(to_bytes(s));
}

std::string get_str(ByteReader& r) { return r.string(r.u16()); }

}  // namespace

Bytes encode_hello(const Hello& h) {
  ByteWriter w;
  put_str(w, h.version);
  put_str(w, h.device_id);
  w.u32(h.features);
  w.u16(h.setup_count);
  return w.take();
}

Hello decode_hello(ByteView body) {
  ByteReader r(body, Errc::Malformed);
  Hello h;
  h.version = get_str(r);
  h.device_id = get_str(r);
  h.features = r.u32();
  h.setup_count = r.u16();
  if (!r.empty()) throw Error(Errc::Malformed, "trailing hello bytes");
  return h;
}

Bytes encode_setup(const ChannelDescriptor& d) {
  ByteWriter w;
  put_str(w, d.account);
  put_str(w, d.service);
  put_str(w, d.name);
  w.raw(d.channel_uuid);
  w.u16(d.tcp_port);
  w.u8(static_cast<std::uint8_t>(d.protection_class));
  w.u8(static_cast<std::uint8_t>(d.urgency));
  return w.take();
}

ChannelDescriptor decode_setup(ByteView body) {
  ByteReader r(body, Errc::Malformed);
  ChannelDescriptor d;
  d.account = get_str(r);
  d.service = get_str(r);
  d.name = get_str(r);
  auto u = r.view(16);
  std::copy(u.begin(), u.end(), d.channel_uuid.begin());
  d.tcp_port = r.u16();
  d.protection_class = static_cast<char>(r.u8());
  std::uint8_t urg = r.u8();
  if (urg > 1 || (d.protection_class != 'C' && d.protection_class != 'D'))
    throw Error(Errc::Malformed, "setup channel fields");
  d.urgency = static_cast<Urgency>(urg);
  if (!r.empty()) throw Error(Errc::Malformed, "trailing setup bytes");
  return d;
}

Bytes encode_close(const Uuid& channel) { return Bytes(channel.begin(), channel.end()); }

Uuid decode_close(ByteView body) {
  if (body.size() != 16) throw Error(Errc::Malformed, "close channel body");
  Uuid u;
  std::copy(body.begin(), body.end(), u.begin());
  return u;
}

int version_major(const std::string& v) {
  std::size_t dot = v.find('.');
  try {
    return std::stoi(v.substr(0, dot));
  } catch (const std::exception&) {
    throw Error(Errc::IncompatibleVersion, "unparseable version " + v);
  }
}

}  // namespace witchstack::alloy
