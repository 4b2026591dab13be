#include <gtest/gtest.h>

#include "support/random.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/crypto/crypto.hpp"
#include "witchstack/ike/message.hpp"

using namespace witchstack;
using namespace witchstack::ike;
using witchstack::testing::Gen;

namespace {

IkeMessage sample(bool encrypted) {
  IkeMessage m;
  m.spi_i = 0x0102030405060708;
  m.spi_r = 0x1112131415161718;
  m.exchange_type = ExchangeType::Informational;
  m.from_initiator = true;
  m.msg_id = 9;
  m.is_encrypted = encrypted;
  m.payloads.push_back(make_notify(notify::kDeviceName, to_bytes("Apple Watch")));
  m.payloads.push_back({static_cast<std::uint8_t>(PayloadType::Nonce), Bytes(32, 0xAB)});
  return m;
}

IkeCipher key() {
  return {crypto::Aead::ChaCha20Poly1305, crypto::random_bytes(32), crypto::random_bytes(4)};
}

}  // namespace

TEST(IkeMessage, NotifyTypesMatchPrivateTable) {
  std::vector<std::uint16_t> expected = {48601, 48602, 48603, 48604, 50701, 50702,
                                         50801, 50802, 50811, 50812, 51401, 51501};
  EXPECT_EQ(known_notify_types(), expected);
  int known = 0;
  for (std::uint32_t t = 0; t <= 0xFFFF; ++t) known += is_known_notify_type(static_cast<std::uint16_t>(t));
  EXPECT_EQ(known, 12);
}

TEST(IkeMessage, PlainHeaderLayout) {
  IkeMessage m = sample(false);
  Bytes b = ike_encode(m);
  ASSERT_GE(b.size(), kIkeHeaderSize);
  EXPECT_EQ(b[0], 0x01);
  EXPECT_EQ(b[15], 0x18);
  EXPECT_EQ(b[16], 0x20);
  EXPECT_EQ(b[17], 37);
  EXPECT_EQ(b[18], kFlagInitiator);
  EXPECT_EQ(b[22], 9);
  EXPECT_EQ(ByteReader(ByteView(b).subspan(23)).u32(), b.size());
  EXPECT_EQ(b[27], 41);
  EXPECT_EQ(ike_decode(b), m);
}

TEST(IkeMessage, EncryptedRoundTrip) {
  IkeCipher k = key();
  IkeMessage m = sample(true);
  Bytes b = ike_encode(m, &k);
  EXPECT_EQ(b[18], kFlagInitiator | kFlagEncrypted);
  EXPECT_EQ(ike_decode(b, &k), m);
  try {
    ike_decode(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AuthTagMismatch);
  }
}

TEST(IkeMessage, EncryptedHeaderIsAuthenticated) {
  IkeCipher k = key();
  Bytes b = ike_encode(sample(true), &k);
  for (std::size_t i : {0u, 17u, 22u, 30u, 40u}) {
    Bytes t = b;
    t[i] ^= 0x04;
    EXPECT_THROW(ike_decode(t, &k), Error) << i;
  }
}

TEST(IkeMessage, SaProposalRoundTrip) {
  SaProposal p = proposal_from(series5_profile());
  EXPECT_EQ(p.encryption, (std::vector<std::uint16_t>{28, 20}));
  EXPECT_EQ(p.prf, (std::vector<std::uint16_t>{7, 5}));
  EXPECT_EQ(p.dh, (std::vector<std::uint16_t>{31, 21, 18}));
  EXPECT_EQ(decode_sa(encode_sa(p)), p);
}

TEST(IkeMessage, RandomRoundTripAndFuzz) {
  Gen g(11);
  IkeCipher k = key();
  for (int i = 0; i < 1000; ++i) {
    IkeMessage m;
    m.spi_i = g.next();
    m.spi_r = g.next();
    const ExchangeType kinds[] = {ExchangeType::SaInit, ExchangeType::Auth, ExchangeType::Informational};
    m.exchange_type = kinds[g.uniform<int>(0, 2)];
    m.from_initiator = g.coin();
    m.is_response = g.coin();
    m.msg_id = static_cast<std::uint32_t>(g.next());
    m.is_encrypted = g.coin();
    int n = g.uniform<int>(0, 5);
    for (int j = 0; j < n; ++j) m.payloads.push_back({g.uniform<std::uint8_t>(33, 48), g.bytes_up_to(80)});
    Bytes b = ike_encode(m, &k);
    ASSERT_EQ(ike_decode(b, &k), m);
  }
  for (int i = 0; i < 10000; ++i) {
    Bytes b = g.coin() ? ike_encode(sample(g.coin()), &k) : g.bytes_up_to(120);
    if (!b.empty()) b[g.uniform<std::size_t>(0, b.size() - 1)] ^= static_cast<std::uint8_t>(g.next());
    try {
      ike_decode(b, &k);
    } catch (const Error&) {
    }
  }
}
