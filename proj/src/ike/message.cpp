#include "witchstack/ike/message.hpp"

#include <algorithm>

#include "witchstack/common/error.hpp"

namespace witchstack::ike {

const std::vector<std::uint16_t>& known_notify_types() {
  static const std::vector<std::uint16_t> types = {
      notify::kEncryptedPrelude,         notify::kTerminusVersion,
      notify::kDeviceName,               notify::kBuildVersion,
      notify::kProxyNotify,              notify::kLinkDirectorMessage,
      notify::kInnerAddrInitiatorClassD, notify::kInnerAddrResponderClassD,
      notify::kInnerAddrInitiatorClassC, notify::kInnerAddrResponderClassC,
      notify::kAlwaysOnWifi,             notify::kIsAltAccountDevice};
  return types;
}

bool is_known_notify_type(std::uint16_t type) noexcept {
  const auto& t = known_notify_types();
  return std::find(t.begin(), t.end(), type) != t.end();
}

std::string_view notify_name(std::uint16_t type) noexcept {
  switch (type) {
    case notify::kNoProposalChosen: return "NO_PROPOSAL_CHOSEN";
    case notify::kAuthenticationFailed: return "AUTHENTICATION_FAILED";
    case notify::kEncryptedPrelude: return "EncryptedPrelude";
    case notify::kTerminusVersion: return "TerminusVersion";
    case notify::kDeviceName: return "DeviceName";
    case notify::kBuildVersion: return "BuildVersion";
    case notify::kProxyNotify: return "ProxyNotify";
    case notify::kLinkDirectorMessage: return "LinkDirectorMessage";
    case notify::kInnerAddrInitiatorClassD: return "IAdrInitiatorClassD";
    case notify::kInnerAddrResponderClassD: return "IAdrResponderClassD";
    case notify::kInnerAddrInitiatorClassC: return "IAdrInitiatorClassC";
    case notify::kInnerAddrResponderClassC: return "IAdrResponderClassC";
    case notify::kAlwaysOnWifi: return "AlwaysOnWiFi";
    case notify::kIsAltAccountDevice: return "IsAltAccountDevice";
    default: return "unknown";
  }
}

IkePayload make_notify(std::uint16_t type, Bytes data) {
  ByteWriter w;
  w.u16(type);
  w.raw(data);
  return {static_cast<std::uint8_t>(PayloadType::Notify), w.take()};
}

std::optional<NotifyPayload> as_notify(const IkePayload& p) {
  if (p.type != static_cast<std::uint8_t>(PayloadType::Notify) || p.body.size() < 2)
    return std::nullopt;
  NotifyPayload n;
  n.notify_type = static_cast<std::uint16_t>(p.body[0] << 8 | p.body[1]);
  n.data.assign(p.body.begin() + 2, p.body.end());
  return n;
}

std::vector<NotifyPayload> IkeMessage::notifies() const {
  std::vector<NotifyPayload> out;
  for (const auto& p : payloads)
    if (auto n = as_notify(p)) out.push_back(std::move(*n));
  return out;
}

std::optional<NotifyPayload> IkeMessage::find_notify(std::uint16_t type) const {
  for (const auto& p : payloads) {
    auto n = as_notify(p);
    if (n && n->notify_type == type) return n;
  }
  return std::nullopt;
}

const IkePayload* IkeMessage::find(PayloadType type) const {
  for (const auto& p : payloads)
    if (p.type == static_cast<std::uint8_t>(type)) return &p;
  return nullptr;
}

Bytes encode_payloads(const std::vector<IkePayload>& payloads) {
  ByteWriter w;
  for (const auto& p : payloads) {
    if (p.body.size() > 0xFFFF) throw Error(Errc::PayloadTooLarge, "ike payload");
    w.u8(p.type);
    w.u16(static_cast<std::uint16_t>(p.body.size()));
    w.raw(p.body);
  }
  return w.take();
}

std::vector<IkePayload> decode_payloads(ByteView body) {
  ByteReader r(body, Errc::Malformed);
  std::vector<IkePayload> out;
  while (!r.empty()) {
    IkePayload p;
    p.type = r.u8();
    std::uint16_t len = r.u16();
    p.body = r.bytes(len);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::uint8_t header_flags(const IkeMessage& m) {
  std::uint8_t f = 0;
  if (m.from_initiator) f |= kFlagInitiator;
  if (m.is_response) f |= kFlagResponse;
  if (m.is_encrypted) f |= kFlagEncrypted;
  return f;
}

Bytes iv_nonce(const IkeCipher& c, ByteView iv) {
  Bytes nonce = c.salt;
  append(nonce, iv);
  return nonce;
}

}  // namespace

IkeHeader parse_ike_header(ByteView wire) {
  ByteReader r(wire, Errc::Malformed);
  IkeHeader h;
  h.spi_i = r.u64();
  h.spi_r = r.u64();
  h.version = r.u8();
  h.exchange = r.u8();
  h.flags = r.u8();
  h.msg_id = r.u32();
  h.length = r.u32();
  if (h.version != 0x20) throw Error(Errc::Malformed, "ike version");
  if (h.length != wire.size()) throw Error(Errc::Malformed, "ike length");
  return h;
}

Bytes ike_encode(const IkeMessage& msg, const IkeCipher* cipher) {
  Bytes body = encode_payloads(msg.payloads);
  Bytes iv;
  std::size_t body_len = body.size();
  if (msg.is_encrypted) {
    if (!cipher) throw Error(Errc::Crypto, "encrypted ike message without key");
    iv = crypto::random_bytes(kIkeIvSize);
    body_len = kIkeIvSize + body.size() + crypto::kAeadTagSize;
  }
  ByteWriter w;
  w.u64(msg.spi_i);
  w.u64(msg.spi_r);
  w.u8(0x20);
  w.u8(static_cast<std::uint8_t>(msg.exchange_type));
  w.u8(header_flags(msg));
  w.u32(msg.msg_id);
  w.u32(static_cast<std::uint32_t>(kIkeHeaderSize + body_len));
  Bytes out = w.take();
  if (!msg.is_encrypted) {
    append(out, body);
    return out;
  }
  Bytes sealed = crypto::aead_seal(cipher->alg, cipher->key, iv_nonce(*cipher, iv), out, body);
  append(out, iv);
  append(out, sealed);
  return out;
}

IkeMessage ike_decode(ByteView wire, const IkeCipher* cipher) {
  IkeHeader h = parse_ike_header(wire);
  if (h.exchange != static_cast<std::uint8_t>(ExchangeType::SaInit) &&
      h.exchange != static_cast<std::uint8_t>(ExchangeType::Auth) &&
      h.exchange != static_cast<std::uint8_t>(ExchangeType::Informational))
    throw Error(Errc::Malformed, "exchange type");
  if (h.flags & ~(kFlagEncrypted | kFlagInitiator | kFlagResponse))
    throw Error(Errc::Malformed, "ike flags");
  IkeMessage m;
  m.spi_i = h.spi_i;
  m.spi_r = h.spi_r;
  m.exchange_type = static_cast<ExchangeType>(h.exchange);
  m.from_initiator = h.flags & kFlagInitiator;
  m.is_response = h.flags & kFlagResponse;
  m.msg_id = h.msg_id;
  m.is_encrypted = h.flags & kFlagEncrypted;
  ByteView header = wire.subspan(0, kIkeHeaderSize);
  ByteView body = wire.subspan(kIkeHeaderSize);
  if (!m.is_encrypted) {
    m.payloads = decode_payloads(body);
    return m;
  }
  if (!cipher) throw Error(Errc::AuthTagMismatch, "no key for encrypted ike message");
  if (body.size() < kIkeIvSize + crypto::kAeadTagSize)
    throw Error(Errc::Malformed, "encrypted body too short");
  auto plain = crypto::aead_open(cipher->alg, cipher->key,
                                 iv_nonce(*cipher, body.subspan(0, kIkeIvSize)), header,
                                 body.subspan(kIkeIvSize));
  if (!plain) throw Error(Errc::AuthTagMismatch, "ike message");
  m.payloads = decode_payloads(*plain);
  return m;
}

namespace {
constexpr std::uint8_t kTransformEncr = 1;
constexpr std::uint8_t kTransformPrf = 2;
constexpr std::uint8_t kTransformDh = 4;

void put_list(ByteWriter& w, std::uint8_t kind, const std::vector<std::uint16_t>& ids) {
  w.u8(kind);
  w.u8(static_cast<std::uint8_t>(ids.size()));
  for (auto id : ids) w.u16(id);
}
}  // namespace

Bytes encode_sa(const SaProposal& sa) {
  ByteWriter w;
  put_list(w, kTransformEncr, sa.encryption);
  put_list(w, kTransformPrf, sa.prf);
  put_list(w, kTransformDh, sa.dh);
  return w.take();
}

SaProposal decode_sa(ByteView body) {
  ByteReader r(body, Errc::Malformed);
  SaProposal sa;
  while (!r.empty()) {
    std::uint8_t kind = r.u8();
    std::uint8_t n = r.u8();
    std::vector<std::uint16_t>* dst = nullptr;
    if (kind == kTransformEncr) dst = &sa.encryption;
    else if (kind == kTransformPrf) dst = &sa.prf;
    else if (kind == kTransformDh) dst = &sa.dh;
    else throw Error(Errc::Malformed, "transform kind");
    for (int i = 0; i < n; ++i) dst->push_back(r.u16());
  }
  return sa;
}

SaProposal proposal_from(const SuiteProfile& p) {
  SaProposal sa;
  for (auto a : p.encryption) sa.encryption.push_back(static_cast<std::uint16_t>(a));
  for (auto a : p.prf) sa.prf.push_back(static_cast<std::uint16_t>(a));
  for (auto a : p.dh) sa.dh.push_back(static_cast<std::uint16_t>(a));
  return sa;
}

}  // namespace witchstack::ike
