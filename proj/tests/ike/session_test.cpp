#include <gtest/gtest.h>

#include <future>

#include "support/queue_transport.hpp"
#include "support/random.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/ike/ldm.hpp"
#include "witchstack/ike/session.hpp"

using namespace witchstack;
using namespace witchstack::ike;
using witchstack::testing::Gen;
using witchstack::testing::transport_pair;

namespace {

struct Pair {
  SecurityLog watch_log, phone_log;
  std::unique_ptr<IkeSession> watch, phone;
};

std::unique_ptr<Pair> establish(bool strict, ProtectionClass c = ProtectionClass::C) {
  static const DeviceIdentity w = DeviceIdentity::generate("Apple Watch", "18S830");
  static const DeviceIdentity p = DeviceIdentity::generate("iPhone", "18H17");
  auto [ti, tr] = transport_pair();
  HandshakeOptions wo, po;
  wo.strict_notify_mode = po.strict_notify_mode = strict;
  wo.local_wifi = WifiAddress::v4(192, 168, 1, 20, 7000);
  po.local_wifi = WifiAddress::v4(192, 168, 1, 10, 7001);
  auto fut = std::async(std::launch::async,
                        [&] { return handshake_respond(p, PeerKeys::of(w), tr, po); });
  auto hi = handshake_initiate(w, PeerKeys::of(p), c, ti, wo);
  auto out = std::make_unique<Pair>();
  out->watch = std::make_unique<IkeSession>(hi, &out->watch_log);
  out->phone = std::make_unique<IkeSession>(fut.get(), &out->phone_log);
  return out;
}

// Unencrypted INFORMATIONAL as an on-path attacker would build it.
Bytes forge(const IkeSession& victim, std::vector<IkePayload> payloads, bool as_initiator) {
  IkeMessage m;
  m.spi_i = victim.handshake().spi_i;
  m.spi_r = victim.handshake().spi_r;
  m.exchange_type = ExchangeType::Informational;
  m.from_initiator = as_initiator;
  m.msg_id = 2;
  m.payloads = std::move(payloads);
  return ike_encode(m);
}

IkePayload ldm_notify(std::vector<LdmTlv> tlvs) {
  LinkDirectorMessage l;
  l.tlvs = std::move(tlvs);
  return make_notify(notify::kLinkDirectorMessage, ldm_encode(l));
}

Ipv6 attacker_ip() {
  Ipv6 a{0xfe, 0x80};
  a[15] = 0x66;
  return a;
}

}  // namespace

TEST(Session, VulnerableModeAcceptsForgedAddress) {
  auto s = establish(false);
  auto target = WifiAddress::v6(attacker_ip(), 4444);
  auto in = s->watch->handle(forge(*s->watch, {ldm_notify({address_tlv(target)})}, false));
  ASSERT_EQ(in.effects.size(), 1u);
  EXPECT_EQ(in.effects[0].kind, EffectKind::PeerAddressUpdated);
  EXPECT_EQ(in.effects[0].address, target);
  EXPECT_EQ(s->watch->state().peer_wifi, target);
  EXPECT_FALSE(in.reply);
  EXPECT_EQ(s->watch_log.size(), 0u);
  auto queued = s->watch->effects().try_pop();
  ASSERT_TRUE(queued);
  EXPECT_EQ(queued->kind, EffectKind::PeerAddressUpdated);
}

TEST(Session, StrictModeIgnoresForgedAddress) {
  auto s = establish(true);
  auto before = s->watch->state_hash();
  auto original = s->watch->state().peer_wifi;
  auto in = s->watch->handle(
      forge(*s->watch, {ldm_notify({address_tlv(WifiAddress::v6(attacker_ip(), 4444))})}, false));
  EXPECT_TRUE(in.effects.empty());
  EXPECT_EQ(s->watch->state().peer_wifi, original);
  EXPECT_EQ(s->watch->state_hash(), before);
  EXPECT_EQ(s->watch_log.count(SecurityEventKind::UnauthenticatedNotify), 1u);
  EXPECT_EQ(s->watch_log.size(), 1u);
}

TEST(Session, StrictModeFuzzedForgeriesNeverChangeState) {
  auto s = establish(true);
  Gen g(99);
  auto before = s->watch->state_hash();
  const std::vector<std::uint16_t> types = known_notify_types();
  for (int i = 0; i < 3000; ++i) {
    std::vector<IkePayload> payloads;
    int n = g.uniform<int>(1, 4);
    for (int k = 0; k < n; ++k) {
      if (g.coin()) {
        std::vector<LdmTlv> tlvs;
        tlvs.push_back(address_tlv(WifiAddress::v4(10, 0, 0, g.uniform<std::uint8_t>(1, 250), g.uniform<std::uint16_t>(1, 65535))));
        if (g.coin()) tlvs.push_back({1, {}});
        if (g.coin()) tlvs.push_back({5, {}});
        payloads.push_back(ldm_notify(tlvs));
      } else {
        payloads.push_back(make_notify(types[g.uniform<std::size_t>(0, types.size() - 1)], g.bytes_up_to(24)));
      }
    }
    Bytes wire = forge(*s->watch, payloads, g.coin());
    if (g.uniform<int>(0, 4) == 0) wire[18] |= kFlagResponse;
    s->watch->handle(wire);
  }
  EXPECT_EQ(s->watch->state_hash(), before);
  EXPECT_EQ(s->watch_log.count(SecurityEventKind::UnauthenticatedNotify), 3000u);
}

TEST(Session, EncryptedPreferWifiChangesPreference) {
  auto s = establish(true);
  Bytes msg = s->phone->informational({ldm_notify({{5, {}}})});
  auto in = s->watch->handle(msg);
  ASSERT_EQ(in.effects.size(), 1u);
  EXPECT_EQ(in.effects[0].kind, EffectKind::LinkPreferenceChanged);
  EXPECT_TRUE(s->watch->state().prefer_wifi);
  EXPECT_TRUE(in.reply);
}

TEST(Session, HelloSignalsRestart) {
  auto s = establish(true);
  auto in = s->watch->handle(s->phone->informational({ldm_notify({{1, {}}})}));
  ASSERT_EQ(in.effects.size(), 1u);
  EXPECT_EQ(in.effects[0].kind, EffectKind::Restarted);
  EXPECT_EQ(s->watch->state().restarts, 1u);
}

TEST(Session, ProxyNotifyUpdatesEndpoint) {
  auto s = establish(true, ProtectionClass::D);
  ProxyEndpoint p{inner_address(ProtectionClass::D, false), 62742};
  auto in = s->watch->handle(s->phone->informational({make_notify(notify::kProxyNotify, encode_proxy_endpoint(p))}));
  ASSERT_EQ(in.effects.size(), 1u);
  EXPECT_EQ(in.effects[0].kind, EffectKind::ProxyEndpointUpdated);
  EXPECT_EQ(s->watch->state().proxy, p);
}

TEST(Session, UnknownNotifySkipped) {
  auto s = establish(true);
  auto in = s->watch->handle(s->phone->informational({make_notify(40000, {1, 2})}));
  EXPECT_TRUE(in.effects.empty());
  EXPECT_EQ(s->watch->unknown_notifies(), 1u);
}

TEST(Session, KeepaliveCarriesAddressAndPeerAnswers) {
  auto s = establish(true);
  Bytes ka = s->watch->keepalive_tick();
  EXPECT_EQ(s->watch->missed(), 1);
  auto at_phone = s->phone->handle(ka);
  EXPECT_TRUE(at_phone.effects.empty());
  ASSERT_TRUE(at_phone.reply);
  auto at_watch = s->watch->handle(*at_phone.reply);
  EXPECT_TRUE(at_watch.effects.empty());
  EXPECT_EQ(s->watch->missed(), 0);

  s->watch->set_local_wifi(WifiAddress::v4(192, 168, 1, 21, 7000));
  at_phone = s->phone->handle(s->watch->keepalive_tick());
  ASSERT_EQ(at_phone.effects.size(), 1u);
  EXPECT_EQ(at_phone.effects[0].kind, EffectKind::PeerAddressUpdated);
  EXPECT_EQ(s->phone->state().peer_wifi, WifiAddress::v4(192, 168, 1, 21, 7000));
}

TEST(Session, KeepaliveMessageIsEncryptedInformational) {
  auto s = establish(true);
  Bytes ka = s->watch->keepalive_tick();
  IkeHeader h = parse_ike_header(ka);
  EXPECT_EQ(h.exchange, 37);
  EXPECT_TRUE(h.flags & kFlagEncrypted);
}

TEST(Session, ThreeMissedRepliesTakeSessionDown) {
  auto s = establish(true);
  for (int i = 0; i < 3; ++i) s->watch->keepalive_tick();
  try {
    s->watch->keepalive_tick();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PeerUnresponsive);
  }
  EXPECT_TRUE(s->watch->down());
  bool saw_down = false;
  while (auto e = s->watch->effects().try_pop()) saw_down |= e->kind == EffectKind::SessionDown;
  EXPECT_TRUE(saw_down);
}

TEST(Session, TamperedEncryptedMessageIgnored) {
  auto s = establish(true);
  Bytes msg = s->phone->informational({ldm_notify({{5, {}}})});
  msg.back() ^= 1;
  auto before = s->watch->state_hash();
  auto in = s->watch->handle(msg);
  EXPECT_TRUE(in.effects.empty());
  EXPECT_EQ(s->watch->state_hash(), before);
  EXPECT_EQ(s->watch_log.count(SecurityEventKind::TamperDetected), 1u);
}

TEST(Session, OtherSaIgnored) {
  auto s = establish(false);
  IkeMessage m;
  m.spi_i = 1;
  m.spi_r = 2;
  m.payloads.push_back(ldm_notify({{5, {}}}));
  auto in = s->watch->handle(ike_encode(m));
  EXPECT_TRUE(in.effects.empty());
  EXPECT_FALSE(s->watch->state().prefer_wifi);
}
