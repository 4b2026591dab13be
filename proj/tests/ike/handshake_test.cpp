#include <gtest/gtest.h>

#include <algorithm>
#include <future>

#include "support/queue_transport.hpp"
#include "support/random.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/ike/handshake.hpp"
#include "witchstack/ike/tunnel.hpp"

using namespace witchstack;
using namespace witchstack::ike;
using witchstack::testing::Gen;
using witchstack::testing::transport_pair;

namespace {

// First element of `a` that appears in `b` and is implemented.
template <typename T>
std::optional<T> oracle_first_common(const std::vector<T>& a, const std::vector<T>& b) {
  std::optional<T> best;
  std::size_t best_idx = a.size();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (a[i] == b[j] && is_implemented(a[i]) && i < best_idx) {
        best = a[i];
        best_idx = i;
      }
  return best;
}

struct Devices {
  DeviceIdentity watch = DeviceIdentity::generate("Apple Watch", "18S830");
  DeviceIdentity phone = DeviceIdentity::generate("iPhone", "18H17");
};

struct Outcome {
  HandshakeResult initiator;
  HandshakeResult responder;
};

Outcome run(const Devices& d, ProtectionClass c, HandshakeOptions io, HandshakeOptions ro,
            const PeerKeys* watch_view_of_phone = nullptr) {
  auto [ti, tr] = transport_pair();
  PeerKeys phone_keys = watch_view_of_phone ? *watch_view_of_phone : PeerKeys::of(d.phone);
  auto fut = std::async(std::launch::async, [&, ro] {
    return handshake_respond(d.phone, PeerKeys::of(d.watch), tr, ro);
  });
  HandshakeResult i;
  try {
    i = handshake_initiate(d.watch, phone_keys, c, ti, io);
  } catch (...) {
    try {
      fut.get();
    } catch (...) {
    }
    throw;
  }
  return {i, fut.get()};
}

HandshakeOptions with(SuiteProfile p) {
  HandshakeOptions o;
  o.profile = std::move(p);
  o.timeout = std::chrono::milliseconds(3000);
  return o;
}

}  // namespace

TEST(Negotiation, Series5InitiatorSeries9Responder) {
  auto s = negotiate_suite(series5_profile(), series9_profile());
  EXPECT_EQ(s.encryption, EncrAlg::ChaCha20Poly1305);
  EXPECT_EQ(s.prf, PrfAlg::HmacSha2_512);
  EXPECT_EQ(s.dh, DhGroup::Curve25519);
}

TEST(Negotiation, Series9InitiatorSeries5Responder) {
  auto s = negotiate_suite(series9_profile(), series5_profile());
  EXPECT_EQ(s.encryption, EncrAlg::AesGcm16_256);
  EXPECT_EQ(s.prf, PrfAlg::HmacSha2_512);
  EXPECT_EQ(s.dh, DhGroup::Curve25519);
}

TEST(Negotiation, IdenticalProfilesPickHead) {
  auto s5 = negotiate_suite(series5_profile(), series5_profile());
  EXPECT_EQ(s5.encryption, EncrAlg::ChaCha20Poly1305);
  EXPECT_EQ(s5.prf, PrfAlg::HmacSha2_512);
  EXPECT_EQ(s5.dh, DhGroup::Curve25519);
  auto s9 = negotiate_suite(series9_profile(), series9_profile());
  EXPECT_EQ(s9.encryption, EncrAlg::AesGcm16_256);
}

TEST(Negotiation, TableOrdersPreserved) {
  auto p5 = series5_profile();
  auto p9 = series9_profile();
  EXPECT_EQ(p5.encryption, (std::vector{EncrAlg::ChaCha20Poly1305, EncrAlg::AesGcm16_256}));
  EXPECT_EQ(p9.encryption, (std::vector{EncrAlg::AesGcm16_256, EncrAlg::ChaCha20Poly1305}));
  EXPECT_EQ(p5.prf, (std::vector{PrfAlg::HmacSha2_512, PrfAlg::HmacSha2_256}));
  EXPECT_EQ(p9.prf, (std::vector{PrfAlg::HmacSha2_512}));
  EXPECT_EQ(p5.dh, (std::vector{DhGroup::Curve25519, DhGroup::Ecp521, DhGroup::Modp8192}));
  EXPECT_EQ(p9.dh, (std::vector{DhGroup::Curve448, DhGroup::Curve25519}));
}

TEST(Negotiation, MatchesBruteForceOracle) {
  Gen g(21);
  const std::vector<EncrAlg> encs = {EncrAlg::ChaCha20Poly1305, EncrAlg::AesGcm16_256,
                                     static_cast<EncrAlg>(12)};
  const std::vector<PrfAlg> prfs = {PrfAlg::HmacSha2_256, PrfAlg::HmacSha2_512, static_cast<PrfAlg>(2)};
  const std::vector<DhGroup> dhs = {DhGroup::Curve25519, DhGroup::Curve448, DhGroup::Ecp521,
                                    DhGroup::Modp8192};
  auto pick = [&](const auto& pool) {
    auto v = pool;
    std::shuffle(v.begin(), v.end(), g.engine());
    v.resize(g.uniform<std::size_t>(0, v.size()));
    return v;
  };
  int agreed = 0;
  for (int i = 0; i < 3000; ++i) {
    SuiteProfile a{"a", pick(encs), pick(prfs), pick(dhs), {}};
    SuiteProfile b{"b", pick(encs), pick(prfs), pick(dhs), {}};
    auto e = oracle_first_common(a.encryption, b.encryption);
    auto p = oracle_first_common(a.prf, b.prf);
    auto d = oracle_first_common(a.dh, b.dh);
    if (e && p && d) {
      auto s = negotiate_suite(a, b);
      EXPECT_EQ(s.encryption, *e);
      EXPECT_EQ(s.prf, *p);
      EXPECT_EQ(s.dh, *d);
      EXPECT_EQ(negotiate_suite(a, b), s);
      ++agreed;
    } else {
      try {
        negotiate_suite(a, b);
        ADD_FAILURE();
      } catch (const Error& err) {
        EXPECT_EQ(err.code(), Errc::NoCommonSuite);
      }
    }
  }
  EXPECT_GT(agreed, 100);
}

TEST(Handshake, CrossProfilesNegotiateOverTheWire) {
  Devices d;
  struct Case {
    SuiteProfile i, r;
    EncrAlg expect;
  } cases[] = {{series5_profile(), series9_profile(), EncrAlg::ChaCha20Poly1305},
               {series9_profile(), series5_profile(), EncrAlg::AesGcm16_256},
               {series5_profile(), series5_profile(), EncrAlg::ChaCha20Poly1305},
               {series9_profile(), series9_profile(), EncrAlg::AesGcm16_256}};
  for (const auto& c : cases) {
    for (int rep = 0; rep < 2; ++rep) {
      auto o = run(d, ProtectionClass::C, with(c.i), with(c.r));
      EXPECT_EQ(o.initiator.suite.encryption, c.expect);
      EXPECT_EQ(o.initiator.suite, o.responder.suite);
      EXPECT_EQ(o.initiator.suite.prf, PrfAlg::HmacSha2_512);
      EXPECT_EQ(o.initiator.suite.dh, DhGroup::Curve25519);
    }
  }
}

TEST(Handshake, TunnelsInteroperateBothWays) {
  Devices d;
  for (auto c : {ProtectionClass::C, ProtectionClass::D}) {
    auto o = run(d, c, with(series5_profile()), with(series9_profile()));
    EXPECT_EQ(o.responder.protection_class, c);
    TunnelSession w = o.initiator.tunnel, p = o.responder.tunnel;
    EXPECT_EQ(tunnel_open(p, tunnel_seal(w, to_bytes("to phone"))), to_bytes("to phone"));
    EXPECT_EQ(tunnel_open(w, tunnel_seal(p, to_bytes("to watch"))), to_bytes("to watch"));
    EXPECT_EQ(w.inner_local, p.inner_peer);
    EXPECT_EQ(w.inner_peer, p.inner_local);
  }
}

TEST(Handshake, PeerNotifiesExchanged) {
  Devices d;
  HandshakeOptions io = with(series5_profile());
  io.local_wifi = WifiAddress::v4(10, 0, 0, 7, 5000);
  io.prelude = to_bytes("prelude-bytes");
  HandshakeOptions ro = with(series9_profile());
  ro.local_wifi = WifiAddress::v4(10, 0, 0, 1, 6000);
  ro.proxy = ProxyEndpoint{inner_address(ProtectionClass::D, false), 62742};
  auto o = run(d, ProtectionClass::D, io, ro);
  EXPECT_EQ(o.initiator.peer.device_name, "iPhone");
  EXPECT_EQ(o.initiator.peer.build_version, "18H17");
  EXPECT_EQ(o.initiator.peer.terminus_version, 0x000d);
  EXPECT_EQ(o.responder.peer.device_name, "Apple Watch");
  EXPECT_EQ(o.responder.peer.build_version, "18S830");
  EXPECT_EQ(o.initiator.peer_wifi, ro.local_wifi);
  EXPECT_EQ(o.responder.peer_wifi, io.local_wifi);
  EXPECT_EQ(o.initiator.proxy, ro.proxy);
  EXPECT_EQ(o.responder.prelude_echo, io.prelude);
  EXPECT_EQ(o.initiator.prelude_echo, io.prelude);
}

TEST(Handshake, ClassKeysAreSeparated) {
  Devices d;
  auto c = run(d, ProtectionClass::C, with(series9_profile()), with(series9_profile()));
  auto dd = run(d, ProtectionClass::D, with(series9_profile()), with(series9_profile()));
  EXPECT_NE(c.initiator.tunnel.send.key, dd.initiator.tunnel.send.key);
  EXPECT_NE(c.initiator.tunnel.recv.key, dd.initiator.tunnel.recv.key);
  EXPECT_NE(c.responder.tunnel.send.key, dd.responder.tunnel.send.key);

  // same transcript inputs, only the label differs
  Bytes dh = crypto::random_bytes(32), ni = crypto::random_bytes(32), nr = crypto::random_bytes(32);
  auto kc = derive_keys(PrfAlg::HmacSha2_512, dh, ni, nr, 1, 2, ProtectionClass::C);
  auto kd = derive_keys(PrfAlg::HmacSha2_512, dh, ni, nr, 1, 2, ProtectionClass::D);
  auto kc2 = derive_keys(PrfAlg::HmacSha2_512, dh, ni, nr, 1, 2, ProtectionClass::C);
  EXPECT_EQ(kc.esp_i2r.key, kc2.esp_i2r.key);
  for (const auto* a : {&kc.ike_i2r, &kc.ike_r2i, &kc.esp_i2r, &kc.esp_r2i})
    for (const auto* b : {&kd.ike_i2r, &kd.ike_r2i, &kd.esp_i2r, &kd.esp_r2i}) EXPECT_NE(a->key, b->key);
  EXPECT_NE(kc.esp_i2r.key, kc.esp_r2i.key);
  EXPECT_EQ(kc.esp_i2r.key.size(), 32u);
  EXPECT_EQ(kc.esp_i2r.salt.size(), 4u);
}

TEST(Handshake, ResponderWithWrongKeyFailsAuth) {
  Devices d;
  DeviceIdentity impostor = DeviceIdentity::generate("iPhone", "18H17");
  PeerKeys wrong = PeerKeys::of(impostor);
  auto [ti, tr] = transport_pair();
  auto fut = std::async(std::launch::async, [&] {
    return handshake_respond(d.phone, PeerKeys::of(d.watch), tr, with(series9_profile()));
  });
  try {
    handshake_initiate(d.watch, wrong, ProtectionClass::C, ti, with(series9_profile()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AuthFailure);
  }
  fut.get();
}

TEST(Handshake, InitiatorWithWrongKeyRejectedByResponder) {
  Devices d;
  DeviceIdentity impostor = DeviceIdentity::generate("Apple Watch", "18S830");
  auto [ti, tr] = transport_pair();
  auto fut = std::async(std::launch::async, [&] {
    return handshake_respond(d.phone, PeerKeys::of(d.watch), tr, with(series9_profile()));
  });
  try {
    handshake_initiate(impostor, PeerKeys::of(d.phone), ProtectionClass::C, ti, with(series9_profile()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AuthFailure);
  }
  try {
    fut.get();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AuthFailure);
  }
}

TEST(Handshake, NoCommonSuiteBothSides) {
  Devices d;
  SuiteProfile chacha_only{"x", {EncrAlg::ChaCha20Poly1305}, {PrfAlg::HmacSha2_512}, {DhGroup::Curve25519}, {}};
  SuiteProfile gcm_only{"y", {EncrAlg::AesGcm16_256}, {PrfAlg::HmacSha2_512}, {DhGroup::Curve25519}, {}};
  auto [ti, tr] = transport_pair();
  auto fut = std::async(std::launch::async, [&] {
    return handshake_respond(d.phone, PeerKeys::of(d.watch), tr, with(gcm_only));
  });
  try {
    handshake_initiate(d.watch, PeerKeys::of(d.phone), ProtectionClass::C, ti, with(chacha_only));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoCommonSuite);
  }
  EXPECT_THROW(fut.get(), Error);
}

TEST(Handshake, SilentPeerTimesOut) {
  Devices d;
  auto [ti, tr] = transport_pair();
  HandshakeOptions o = with(series9_profile());
  o.timeout = std::chrono::milliseconds(100);
  try {
    handshake_initiate(d.watch, PeerKeys::of(d.phone), ProtectionClass::C, ti, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Timeout);
  }
}
