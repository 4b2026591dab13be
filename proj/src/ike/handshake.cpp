#include "witchstack/ike/handshake.hpp"

#include "witchstack/common/error.hpp"
#include "witchstack/ike/ldm.hpp"

namespace witchstack::ike {

namespace {

constexpr std::size_t kNonceSize = 32;
constexpr std::size_t kKeySize = 32;
constexpr std::size_t kSaltSize = 4;

IkePayload payload(PayloadType t, Bytes body) {
  return {static_cast<std::uint8_t>(t), std::move(body)};
}

std::uint64_t random_spi() {
  for (;;) {
    ByteReader r(crypto::random_bytes(8));
    std::uint64_t v = r.u64();
    if (v != 0) return v;
  }
}

Bytes ipv6_bytes(const Ipv6& a) { return Bytes(a.begin(), a.end()); }

Bytes label_bytes(ProtectionClass c) { return to_bytes(class_label(c)); }

Bytes signed_octets(ByteView own_sa_init, ByteView peer_nonce, char role, ProtectionClass c) {
  Bytes m(own_sa_init.begin(), own_sa_init.end());
  append(m, peer_nonce);
  m.push_back(static_cast<std::uint8_t>(role));
  append(m, label_bytes(c));
  return m;
}

IkeCipher cipher(const NegotiatedSuite& s, const DirectionalKey& k) {
  return {aead_for(s.encryption), k.key, k.salt};
}

Bytes receive_or_timeout(IkeTransport& t, std::chrono::milliseconds timeout) {
  return t.receive(timeout);
}

std::uint16_t inner_notify(ProtectionClass c, bool initiator) {
  if (c == ProtectionClass::C)
    return initiator ? notify::kInnerAddrInitiatorClassC : notify::kInnerAddrResponderClassC;
  return initiator ? notify::kInnerAddrInitiatorClassD : notify::kInnerAddrResponderClassD;
}

void add_identity_notifies(std::vector<IkePayload>& out, const DeviceIdentity& id) {
  ByteWriter v;
  v.u16(id.terminus_version);
  out.push_back(make_notify(notify::kTerminusVersion, v.take()));
  out.push_back(make_notify(notify::kDeviceName, to_bytes(id.device_name)));
  out.push_back(make_notify(notify::kBuildVersion, to_bytes(id.build_version)));
}

void add_wifi(std::vector<IkePayload>& out, const std::optional<WifiAddress>& wifi) {
  if (!wifi) return;
  LinkDirectorMessage ldm;
  ldm.tlvs.push_back(address_tlv(*wifi));
  out.push_back(make_notify(notify::kLinkDirectorMessage, ldm_encode(ldm)));
}

void read_peer_notifies(const IkeMessage& m, HandshakeResult& r) {
  for (const auto& n : m.notifies()) {
    switch (n.notify_type) {
      case notify::kTerminusVersion:
        if (n.data.size() == 2)
          r.peer.terminus_version = static_cast<std::uint16_t>(n.data[0] << 8 | n.data[1]);
        break;
      case notify::kDeviceName: r.peer.device_name = to_string(n.data); break;
      case notify::kBuildVersion: r.peer.build_version = to_string(n.data); break;
      case notify::kEncryptedPrelude: r.prelude_echo = n.data; break;
      case notify::kProxyNotify: r.proxy = decode_proxy_endpoint(n.data); break;
      case notify::kLinkDirectorMessage:
        try {
          for (const auto& t : ldm_decode(n.data).tlvs)
            if (auto a = tlv_address(t)) r.peer_wifi = a;
        } catch (const Error&) {
        }
        break;
      default: break;
    }
  }
}

void fill_tunnel(HandshakeResult& r, const HandshakeOptions& opt) {
  r.tunnel.protection_class = r.protection_class;
  r.tunnel.cipher_suite = r.suite.encryption;
  r.tunnel.send = r.initiator ? r.keys.esp_i2r : r.keys.esp_r2i;
  r.tunnel.recv = r.initiator ? r.keys.esp_r2i : r.keys.esp_i2r;
  r.tunnel.inner_local = inner_address(r.protection_class, r.initiator);
  r.tunnel.inner_peer = inner_address(r.protection_class, !r.initiator);
  r.tunnel.strict_notify_mode = opt.strict_notify_mode;
  r.local_wifi = opt.local_wifi;
}

template <typename T>
std::vector<T> as_enums(const std::vector<std::uint16_t>& ids) {
  std::vector<T> out;
  for (auto id : ids) out.push_back(static_cast<T>(id));
  return out;
}

template <typename T>
bool contains(const std::vector<T>& v, T x) {
  for (const auto& e : v)
    if (e == x) return true;
  return false;
}

}  // namespace

DeviceIdentity DeviceIdentity::generate(std::string name, std::string build) {
  return {std::move(name), std::move(build), 0x000d,
          crypto::PrivateKey::generate_ec(crypto::Curve::P256),
          crypto::PrivateKey::generate_ec(crypto::Curve::P256)};
}

PeerKeys PeerKeys::of(const DeviceIdentity& id) {
  return {id.class_c_key.public_key(), id.class_d_key.public_key()};
}

Bytes encode_proxy_endpoint(const ProxyEndpoint& p) {
  ByteWriter w;
  w.raw(p.address);
  w.u16(p.port);
  return w.take();
}

std::optional<ProxyEndpoint> decode_proxy_endpoint(ByteView data) {
  if (data.size() != 18) return std::nullopt;
  ProxyEndpoint p;
  std::copy(data.begin(), data.begin() + 16, p.address.begin());
  p.port = static_cast<std::uint16_t>(data[16] << 8 | data[17]);
  return p;
}

KeyMaterial derive_keys(PrfAlg prf, ByteView dh_secret, ByteView nonce_i, ByteView nonce_r,
                        std::uint64_t spi_i, std::uint64_t spi_r, ProtectionClass c) {
  crypto::Hash h = hash_for(prf);
  Bytes nonces(nonce_i.begin(), nonce_i.end());
  append(nonces, nonce_r);
  Bytes skeyseed = crypto::hmac(h, nonces, dh_secret);
  ByteWriter seed;
  seed.raw(nonces);
  seed.u64(spi_i);
  seed.u64(spi_r);
  seed.raw(label_bytes(c));
  constexpr std::size_t kEach = kKeySize + kSaltSize;
  Bytes km = crypto::prf_plus(h, skeyseed, seed.take(), 4 * kEach);
  auto slice = [&](int i) {
    auto b = km.begin() + i * kEach;
    return DirectionalKey{Bytes(b, b + kKeySize), Bytes(b + kKeySize, b + kEach)};
  };
  return {slice(0), slice(1), slice(2), slice(3)};
}

Ipv6 inner_address(ProtectionClass c, bool initiator) {
  Ipv6 a{0xfd, 0x74, 0x6e, 0x6c};
  a[7] = c == ProtectionClass::C ? 0x0c : 0x0d;
  a[15] = initiator ? 2 : 1;
  return a;
}

HandshakeResult handshake_initiate(const DeviceIdentity& identity, const PeerKeys& peer,
                                   ProtectionClass c, IkeTransport& transport,
                                   const HandshakeOptions& opt) {
  HandshakeResult r;
  r.initiator = true;
  r.protection_class = c;
  r.spi_i = random_spi();

  auto eph = crypto::x25519_generate();
  Bytes ni = crypto::random_bytes(kNonceSize);

  IkeMessage init;
  init.spi_i = r.spi_i;
  init.exchange_type = ExchangeType::SaInit;
  init.from_initiator = true;
  init.msg_id = 0;
  init.payloads.push_back(payload(PayloadType::SecurityAssociation, encode_sa(proposal_from(opt.profile))));
  ByteWriter ke;
  ke.u16(static_cast<std::uint16_t>(DhGroup::Curve25519));
  ke.raw(eph.public_key);
  init.payloads.push_back(payload(PayloadType::KeyExchange, ke.take()));
  init.payloads.push_back(payload(PayloadType::Nonce, ni));
  init.payloads.push_back(payload(PayloadType::Identification, label_bytes(c)));
  Bytes init_bytes = ike_encode(init);
  transport.send(init_bytes);

  Bytes resp_bytes = receive_or_timeout(transport, opt.timeout);
  IkeMessage resp = ike_decode(resp_bytes);
  if (resp.exchange_type != ExchangeType::SaInit || !resp.is_response || resp.spi_i != r.spi_i)
    throw Error(Errc::HandshakeFailure, "unexpected SA_INIT response");
  if (resp.find_notify(notify::kNoProposalChosen)) throw Error(Errc::NoCommonSuite);
  const IkePayload* sa_p = resp.find(PayloadType::SecurityAssociation);
  const IkePayload* ke_p = resp.find(PayloadType::KeyExchange);
  const IkePayload* nr_p = resp.find(PayloadType::Nonce);
  if (!sa_p || !ke_p || !nr_p || ke_p->body.size() != 34)
    throw Error(Errc::HandshakeFailure, "incomplete SA_INIT response");
  SaProposal chosen = decode_sa(sa_p->body);
  if (chosen.encryption.size() != 1 || chosen.prf.size() != 1 || chosen.dh.size() != 1)
    throw Error(Errc::HandshakeFailure, "responder chose no single suite");
  r.suite = {static_cast<EncrAlg>(chosen.encryption[0]), static_cast<PrfAlg>(chosen.prf[0]),
             static_cast<DhGroup>(chosen.dh[0])};
  if (!contains(opt.profile.encryption, r.suite.encryption) ||
      !contains(opt.profile.prf, r.suite.prf) || !contains(opt.profile.dh, r.suite.dh) ||
      !is_implemented(r.suite.encryption) || !is_implemented(r.suite.prf) ||
      r.suite.dh != DhGroup::Curve25519)
    throw Error(Errc::NoCommonSuite, "responder chose an unoffered suite");
  r.spi_r = resp.spi_r;
  const Bytes& nr = nr_p->body;
  Bytes dh = crypto::x25519_shared(eph.private_key, ByteView(ke_p->body).subspan(2));
  r.keys = derive_keys(r.suite.prf, dh, ni, nr, r.spi_i, r.spi_r, c);
  IkeCipher send_c = cipher(r.suite, r.keys.ike_i2r);
  IkeCipher recv_c = cipher(r.suite, r.keys.ike_r2i);

  IkeMessage auth;
  auth.spi_i = r.spi_i;
  auth.spi_r = r.spi_r;
  auth.exchange_type = ExchangeType::Auth;
  auth.from_initiator = true;
  auth.msg_id = 1;
  auth.is_encrypted = true;
  auth.payloads.push_back(payload(PayloadType::Authentication,
                                  identity.key(c).sign(signed_octets(init_bytes, nr, 'I', c))));
  add_identity_notifies(auth.payloads, identity);
  auth.payloads.push_back(make_notify(inner_notify(c, true), ipv6_bytes(inner_address(c, true))));
  if (opt.prelude) auth.payloads.push_back(make_notify(notify::kEncryptedPrelude, *opt.prelude));
  add_wifi(auth.payloads, opt.local_wifi);
  auth.payloads.push_back(make_notify(notify::kIsAltAccountDevice, Bytes{0}));
  transport.send(ike_encode(auth, &send_c));

  Bytes auth_resp_bytes = receive_or_timeout(transport, opt.timeout);
  IkeMessage auth_resp;
  try {
    auth_resp = ike_decode(auth_resp_bytes, &recv_c);
  } catch (const Error& e) {
    throw Error(Errc::AuthFailure, e.what());
  }
  if (auth_resp.find_notify(notify::kAuthenticationFailed))
    throw Error(Errc::AuthFailure, "rejected by responder");
  const IkePayload* sig = auth_resp.find(PayloadType::Authentication);
  if (!sig || !peer.key(c).verify(signed_octets(resp_bytes, ni, 'R', c), sig->body))
    throw Error(Errc::AuthFailure, "responder signature");
  read_peer_notifies(auth_resp, r);
  fill_tunnel(r, opt);
  return r;
}

HandshakeResult handshake_respond(const DeviceIdentity& identity, const PeerKeys& peer,
                                  IkeTransport& transport, const HandshakeOptions& opt) {
  Bytes req = receive_or_timeout(transport, opt.timeout);
  return handshake_respond_to(identity, peer, transport, req, opt);
}

HandshakeResult handshake_respond_to(const DeviceIdentity& identity, const PeerKeys& peer,
                                     IkeTransport& transport, ByteView init_bytes,
                                     const HandshakeOptions& opt) {
  IkeMessage init = ike_decode(init_bytes);
  if (init.exchange_type != ExchangeType::SaInit || init.is_response || init.spi_r != 0)
    throw Error(Errc::HandshakeFailure, "expected SA_INIT request");
  const IkePayload* sa_p = init.find(PayloadType::SecurityAssociation);
  const IkePayload* ke_p = init.find(PayloadType::KeyExchange);
  const IkePayload* ni_p = init.find(PayloadType::Nonce);
  const IkePayload* id_p = init.find(PayloadType::Identification);
  if (!sa_p || !ke_p || !ni_p || !id_p || id_p->body.size() != 1)
    throw Error(Errc::HandshakeFailure, "incomplete SA_INIT request");
  HandshakeResult r;
  r.initiator = false;
  if (id_p->body[0] == 'C') r.protection_class = ProtectionClass::C;
  else if (id_p->body[0] == 'D') r.protection_class = ProtectionClass::D;
  else throw Error(Errc::HandshakeFailure, "unknown protection class");
  ProtectionClass c = r.protection_class;
  r.spi_i = init.spi_i;
  r.spi_r = random_spi();

  IkeMessage resp;
  resp.spi_i = r.spi_i;
  resp.spi_r = r.spi_r;
  resp.exchange_type = ExchangeType::SaInit;
  resp.is_response = true;
  resp.msg_id = init.msg_id;

  SaProposal offered = decode_sa(sa_p->body);
  try {
    r.suite.encryption = pick_first_common(as_enums<EncrAlg>(offered.encryption), opt.profile.encryption);
    r.suite.prf = pick_first_common(as_enums<PrfAlg>(offered.prf), opt.profile.prf);
    r.suite.dh = pick_first_common(as_enums<DhGroup>(offered.dh), opt.profile.dh);
    if (ke_p->body.size() != 34 ||
        ByteReader(ke_p->body).u16() != static_cast<std::uint16_t>(r.suite.dh))
      throw Error(Errc::NoCommonSuite, "key exchange group");
  } catch (const Error& e) {
    if (e.code() != Errc::NoCommonSuite) throw;
    resp.spi_r = 0;
    resp.payloads.push_back(make_notify(notify::kNoProposalChosen, {}));
    transport.send(ike_encode(resp));
    throw;
  }

  auto eph = crypto::x25519_generate();
  Bytes nr = crypto::random_bytes(kNonceSize);
  SaProposal chosen{{static_cast<std::uint16_t>(r.suite.encryption)},
                    {static_cast<std::uint16_t>(r.suite.prf)},
                    {static_cast<std::uint16_t>(r.suite.dh)}};
  resp.payloads.push_back(payload(PayloadType::SecurityAssociation, encode_sa(chosen)));
  ByteWriter ke;
  ke.u16(static_cast<std::uint16_t>(r.suite.dh));
  ke.raw(eph.public_key);
  resp.payloads.push_back(payload(PayloadType::KeyExchange, ke.take()));
  resp.payloads.push_back(payload(PayloadType::Nonce, nr));
  Bytes resp_bytes = ike_encode(resp);
  transport.send(resp_bytes);

  const Bytes& ni = ni_p->body;
  Bytes dh = crypto::x25519_shared(eph.private_key, ByteView(ke_p->body).subspan(2));
  r.keys = derive_keys(r.suite.prf, dh, ni, nr, r.spi_i, r.spi_r, c);
  IkeCipher recv_c = cipher(r.suite, r.keys.ike_i2r);
  IkeCipher send_c = cipher(r.suite, r.keys.ike_r2i);

  Bytes auth_bytes = receive_or_timeout(transport, opt.timeout);
  IkeMessage auth;
  try {
    auth = ike_decode(auth_bytes, &recv_c);
  } catch (const Error& e) {
    throw Error(Errc::AuthFailure, e.what());
  }

  IkeMessage reply;
  reply.spi_i = r.spi_i;
  reply.spi_r = r.spi_r;
  reply.exchange_type = ExchangeType::Auth;
  reply.is_response = true;
  reply.msg_id = auth.msg_id;
  reply.is_encrypted = true;

  const IkePayload* sig = auth.find(PayloadType::Authentication);
  if (auth.exchange_type != ExchangeType::Auth || !sig ||
      !peer.key(c).verify(signed_octets(init_bytes, nr, 'I', c), sig->body)) {
    reply.payloads.push_back(make_notify(notify::kAuthenticationFailed, {}));
    transport.send(ike_encode(reply, &send_c));
    throw Error(Errc::AuthFailure, "initiator signature");
  }
  read_peer_notifies(auth, r);

  reply.payloads.push_back(payload(PayloadType::Authentication,
                                   identity.key(c).sign(signed_octets(resp_bytes, ni, 'R', c))));
  add_identity_notifies(reply.payloads, identity);
  reply.payloads.push_back(make_notify(inner_notify(c, false), ipv6_bytes(inner_address(c, false))));
  if (r.prelude_echo) reply.payloads.push_back(make_notify(notify::kEncryptedPrelude, *r.prelude_echo));
  add_wifi(reply.payloads, opt.local_wifi);
  if (c == ProtectionClass::D && opt.proxy)
    reply.payloads.push_back(make_notify(notify::kProxyNotify, encode_proxy_endpoint(*opt.proxy)));
  transport.send(ike_encode(reply, &send_c));

  fill_tunnel(r, opt);
  return r;
}

}  // namespace witchstack::ike
