#include "witchstack/alloy/message.hpp"

#include <zlib.h>

#include <cctype>
#include <chrono>

#include "witchstack/common/error.hpp"
#include "witchstack/crypto/crypto.hpp"

namespace witchstack::alloy {

std::string_view message_type_name(std::uint8_t t) noexcept {
  switch (t) {
    case 0x00: return "DataMessage";
    case 0x01: return "Ack";
    case 0x02: return "ExpiredAck";
    case 0x03: return "DictionaryMessage";
    case 0x04: return "ProtobufMessage";
    case 0x05: return "ResourceTransferMessage";
    default: return "unknown";
  }
}

std::uint8_t AlloyMessage::flags() const noexcept {
  std::uint8_t f = 0;
  if (topic) f |= flag::kTopic;
  if (expiry) f |= flag::kExpiry;
  if (wants_app_ack) f |= flag::kWantsAppAck;
  if (compressed) f |= flag::kCompressed;
  if (expects_peer_response) f |= flag::kExpectsPeerResponse;
  return f;
}

Bytes alloy_encode(const AlloyMessage& m) {
  if (m.topic && m.topic->empty()) throw Error(Errc::TopicMissing, "empty topic");
  ByteWriter body;
  body.u32(m.sequence);
  body.u16(m.stream);
  body.u8(m.flags());
  body.u32(static_cast<std::uint32_t>(m.response_identifier.size()));
  body.raw(to_bytes(m.response_identifier));
  body.u32(static_cast<std::uint32_t>(m.message_uuid.size()));
  body.raw(to_bytes(m.message_uuid));
  if (m.topic) {
    body.u32(static_cast<std::uint32_t>(m.topic->size()));
    body.raw(to_bytes(*m.topic));
  }
  body.raw(m.payload);
  if (m.expiry) body.u32(*m.expiry);
  Bytes b = body.take();
  ByteWriter w;
  w.u8(m.msg_type);
  w.u32(static_cast<std::uint32_t>(b.size()));
  w.raw(b);
  return w.take();
}

std::size_t alloy_frame_size(ByteView prefix) {
  ByteReader r(prefix, Errc::LengthMismatch);
  r.u8();
  return kAlloyPrefixSize + r.u32();
}

AlloyMessage alloy_decode(ByteView wire) {
  ByteReader r(wire, Errc::LengthMismatch);
  AlloyMessage m;
  m.msg_type = r.u8();
  std::uint32_t len = r.u32();
  if (len != r.remaining())
    throw Error(Errc::LengthMismatch,
                "length " + std::to_string(len) + " vs " + std::to_string(r.remaining()));
  m.sequence = r.u32();
  m.stream = r.u16();
  std::uint8_t f = r.u8();
  if (f & flag::kReservedMask) throw Error(Errc::FlagFieldReservedBitsSet);
  m.wants_app_ack = f & flag::kWantsAppAck;
  m.compressed = f & flag::kCompressed;
  m.expects_peer_response = f & flag::kExpectsPeerResponse;
  m.response_identifier = r.string(r.u32());
  m.message_uuid = r.string(r.u32());
  if (f & flag::kTopic) {
    std::uint32_t tl = r.u32();
    if (tl == 0) throw Error(Errc::TopicMissing);
    m.topic = r.string(tl);
  }
  std::size_t tail = (f & flag::kExpiry) ? 4 : 0;
  if (r.remaining() < tail) throw Error(Errc::LengthMismatch, "no room for expiry");
  m.payload = r.bytes(r.remaining() - tail);
  if (tail) m.expiry = r.u32();
  return m;
}

std::optional<Bytes> read_frame(ByteStream& s, std::optional<std::chrono::milliseconds> timeout) {
  auto prefix = s.read_exact(kAlloyPrefixSize, timeout);
  if (!prefix) return std::nullopt;
  std::size_t total = alloy_frame_size(*prefix);
  if (total > (64u << 20)) throw Error(Errc::LengthMismatch, "frame too large");
  Bytes out = std::move(*prefix);
  if (total > kAlloyPrefixSize) {
    auto rest = s.read_exact(total - kAlloyPrefixSize, timeout);
    if (!rest) throw Error(Errc::Io, "stream closed mid-frame");
    append(out, *rest);
  }
  return out;
}

std::uint32_t to_apple_time(std::int64_t unix_seconds) {
  std::int64_t v = unix_seconds - kAppleEpochUnix;
  return v < 0 ? 0 : static_cast<std::uint32_t>(v);
}

std::uint32_t apple_time_now() {
  auto now = std::chrono::system_clock::now().time_since_epoch();
  return to_apple_time(std::chrono::duration_cast<std::chrono::seconds>(now).count());
}

std::string new_uuid_text() {
  Bytes b = crypto::random_bytes(16);
  b[6] = static_cast<std::uint8_t>((b[6] & 0x0f) | 0x40);
  b[8] = static_cast<std::uint8_t>((b[8] & 0x3f) | 0x80);
  Uuid u;
  std::copy(b.begin(), b.end(), u.begin());
  std::string s = uuid_to_string(u);
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

Bytes deflate(ByteView data) {
  uLongf cap = compressBound(static_cast<uLong>(data.size()));
  Bytes out(cap);
  if (compress2(out.data(), &cap, data.data(), static_cast<uLong>(data.size()), Z_DEFAULT_COMPRESSION) != Z_OK)
    throw Error(Errc::Io, "deflate");
  out.resize(cap);
  return out;
}

Bytes inflate(ByteView data) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw Error(Errc::Io, "inflateInit");
  zs.next_in = const_cast<Bytef*>(data.data());
  zs.avail_in = static_cast<uInt>(data.size());
  Bytes out;
  std::uint8_t chunk[16384];
  int rc = Z_OK;
  while (rc == Z_OK) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = ::inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) break;
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
    if (out.size() > (256u << 20)) {
      rc = Z_MEM_ERROR;
      break;
    }
  }
  bool ok = rc == Z_STREAM_END && zs.avail_in == 0;
  inflateEnd(&zs);
  if (!ok) throw Error(Errc::Malformed, "inflate");
  return out;
}

}  // namespace witchstack::alloy
