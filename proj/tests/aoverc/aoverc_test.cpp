#include <gtest/gtest.h>
#include <openssl/evp.h>

#include <fstream>

#include "support/random.hpp"
#include "witchstack/aoverc/aoverc.hpp"

using namespace witchstack;
using namespace witchstack::aoverc;
using witchstack::testing::Gen;

namespace {

// Single-block AES-128, the only primitive the oracle below trusts.
Bytes aes_block(ByteView key, ByteView block) {
  Bytes out(32);
  int len = 0;
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  EVP_EncryptInit_ex(ctx, EVP_aes_128_ecb(), nullptr, key.data(), nullptr);
  EVP_CIPHER_CTX_set_padding(ctx, 0);
  EVP_EncryptUpdate(ctx, out.data(), &len, block.data(), 16);
  EVP_CIPHER_CTX_free(ctx);
  out.resize(16);
  return out;
}

Bytes oracle_cbc(ByteView key, ByteView plain) {
  Bytes padded(plain.begin(), plain.end());
  std::uint8_t pad = static_cast<std::uint8_t>(16 - plain.size() % 16);
  padded.insert(padded.end(), pad, pad);
  Bytes out, prev(16, 0);
  for (std::size_t off = 0; off < padded.size(); off += 16) {
    Bytes x(16);
    for (int i = 0; i < 16; ++i) x[i] = padded[off + i] ^ prev[i];
    prev = aes_block(key, x);
    append(out, prev);
  }
  return out;
}

Bytes oracle_ctr(ByteView key, ByteView data) {
  Bytes out;
  Bytes counter(16, 0);
  for (std::size_t off = 0; off < data.size(); off += 16) {
    Bytes ks = aes_block(key, counter);
    for (std::size_t i = 0; i < 16 && off + i < data.size(); ++i) out.push_back(data[off + i] ^ ks[i]);
    for (int i = 15; i >= 0 && ++counter[i] == 0; --i) {
    }
  }
  return out;
}

Errc code_of(const Keyring& k, const Envelope& e, Mode m) {
  try {
    decrypt_detailed(k, e, m);
  } catch (const Error& err) {
    return err.code();
  }
  return Errc::Io;
}

class AovercTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto [a, b] = keyring_pair();
    alice_ = new Keyring(std::move(a));
    bob_ = new Keyring(std::move(b));
  }
  static void TearDownTestSuite() {
    delete alice_;
    delete bob_;
  }
  static Keyring* alice_;
  static Keyring* bob_;
};

Keyring* AovercTest::alice_ = nullptr;
Keyring* AovercTest::bob_ = nullptr;

}  // namespace

TEST_F(AovercTest, KeySizes) {
  EXPECT_EQ(alice_->local_rsa.bits(), 1280);
  EXPECT_EQ(alice_->local_sign.bits(), 384);
  auto big = crypto::PrivateKey::generate_rsa(2048);
  EXPECT_THROW(Keyring::make(big, alice_->local_sign, alice_->peer_rsa, alice_->peer_verify),
               Error);
  EXPECT_NO_THROW(Keyring::make(alice_->local_rsa, alice_->local_sign, alice_->peer_rsa,
                                alice_->peer_verify));
}

TEST_F(AovercTest, LayersMatchOracle) {
  Gen g(1);
  for (std::size_t len : {1u, 15u, 16u, 17u, 100u}) {
    auto plain = g.bytes(len);
    auto eph = Ephemeral{g.bytes(16), g.bytes(16)};
    auto env = encrypt_with(*alice_, plain, eph);
    EXPECT_EQ(env.sed, oracle_cbc(eph.k2, plain)) << len;
    EXPECT_EQ(env.sed.size() % 16, 0u);

    auto ekd = decode_ekd(env.ekd);
    auto k1c1 = bob_->local_rsa.oaep_decrypt(ekd.c2);
    ASSERT_EQ(k1c1.size(), 32u);
    EXPECT_EQ(Bytes(k1c1.begin(), k1c1.begin() + 16), eph.k1);
    EXPECT_EQ(Bytes(k1c1.begin() + 16, k1c1.end()), oracle_ctr(eph.k1, eph.k2));
    EXPECT_TRUE(alice_->local_sign.public_key().verify(ekd.c2, ekd.s));
  }
}

TEST_F(AovercTest, EkdLayout) {
  auto env = encrypt(*alice_, to_bytes("hi"));
  ByteReader r(env.ekd);
  EXPECT_EQ(r.u8(), 0x01);
  auto c2_len = r.u16();
  EXPECT_EQ(c2_len, 160);
  r.bytes(c2_len);
  auto s_len = r.u16();
  EXPECT_EQ(r.remaining(), s_len);
  EXPECT_EQ(env.ekd.size(), 5u + c2_len + s_len);

  Ekd e{Bytes{0xAA}, Bytes{0xBB, 0xCC}};
  EXPECT_EQ(encode_ekd(e), (Bytes{0x01, 0x00, 0x01, 0xAA, 0x00, 0x02, 0xBB, 0xCC}));
  EXPECT_THROW(decode_ekd(Bytes{0x02, 0x00, 0x00, 0x00, 0x00}), Error);
  EXPECT_THROW(decode_ekd(Bytes{0x01, 0x00, 0x05, 0xAA}), Error);
}

TEST_F(AovercTest, RoundTripAllLengths) {
  Gen g(2);
  for (std::size_t len = 1; len <= 4096; ++len) {
    auto plain = g.bytes(len);
    auto env = encrypt(*alice_, plain);
    ASSERT_EQ(decrypt(*bob_, env), plain) << len;
  }
}

TEST_F(AovercTest, MitigatedRoundTrip) {
  Gen g(3);
  for (std::size_t len : {1u, 15u, 16u, 17u, 1000u}) {
    auto plain = g.bytes(len);
    auto env = encrypt(*alice_, plain, Mode::AeadMitigated);
    EXPECT_EQ(decrypt(*bob_, env, Mode::AeadMitigated), plain);
  }
}

TEST_F(AovercTest, FreshRandomness) {
  auto plain = to_bytes("same plaintext every time");
  auto a = encrypt(*alice_, plain);
  auto b = encrypt(*alice_, plain);
  EXPECT_NE(a.ekd, b.ekd);
  EXPECT_NE(a.sed, b.sed);
}

TEST_F(AovercTest, EmptyPlaintextRejected) {
  EXPECT_THROW(encrypt(*alice_, Bytes{}), Error);
}

TEST_F(AovercTest, EverySignedByteCovered) {
  auto env = encrypt(*alice_, to_bytes("payload"));
  auto c2_len = decode_ekd(env.ekd).c2.size();
  for (std::size_t i = 0; i < c2_len; ++i) {
    auto bad = env;
    bad.ekd[3 + i] ^= 0x01;
    ASSERT_EQ(code_of(*bob_, bad, Mode::Faithful), Errc::SignatureInvalid) << i;
  }
}

TEST_F(AovercTest, WrongRecipientFails) {
  auto env = encrypt(*alice_, to_bytes("for bob"));
  EXPECT_EQ(code_of(*alice_, env, Mode::Faithful), Errc::SignatureInvalid);
  // Signature ok, but the wrapped keys are for someone else.
  Keyring eve{alice_->local_rsa, alice_->local_sign, alice_->peer_rsa, bob_->peer_verify};
  EXPECT_EQ(code_of(eve, env, Mode::Faithful), Errc::OaepDecodeFailure);
  try {
    decrypt(eve, env);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DecryptFailed);
  }
}

TEST_F(AovercTest, CbcMalleabilityLaw) {
  Gen g(4);
  for (int trial = 0; trial < 150; ++trial) {
    std::size_t blocks = g.uniform<std::size_t>(2, 12);
    auto plain = g.bytes(blocks * 16);
    auto env = encrypt(*alice_, plain);
    std::size_t i = g.uniform<std::size_t>(0, blocks - 2);
    auto delta = g.bytes(16);
    auto forged = forge_sample_type(env, i, delta);
    EXPECT_EQ(forged.ekd, env.ekd);
    auto out = decrypt(*bob_, forged);
    ASSERT_EQ(out.size(), plain.size());
    for (std::size_t k = 0; k < 16; ++k)
      ASSERT_EQ(out[(i + 1) * 16 + k], plain[(i + 1) * 16 + k] ^ delta[k]);
    for (std::size_t b = 0; b < blocks; ++b) {
      if (b == i || b == i + 1) continue;
      ASSERT_TRUE(std::equal(out.begin() + b * 16, out.begin() + b * 16 + 16,
                             plain.begin() + b * 16));
    }
  }
}

TEST_F(AovercTest, MitigatedRejectsEveryAcceptedTamper) {
  Gen g(5);
  int faithful_accepted = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t blocks = g.uniform<std::size_t>(2, 8);
    auto plain = g.bytes(blocks * 16);
    auto delta = g.bytes(16);
    std::size_t i = g.uniform<std::size_t>(0, blocks - 2);

    auto faithful = forge_sample_type(encrypt(*alice_, plain), i, delta);
    if (code_of(*bob_, faithful, Mode::Faithful) == Errc::Io) ++faithful_accepted;

    auto mitigated = forge_sample_type(encrypt(*alice_, plain, Mode::AeadMitigated), i, delta);
    ASSERT_EQ(code_of(*bob_, mitigated, Mode::AeadMitigated), Errc::TagInvalid);
  }
  EXPECT_EQ(faithful_accepted, 100);
}

TEST_F(AovercTest, ForgeSampleTypeByte) {
  // uuid(16) then a type byte leading the next block
  Bytes plain(48, 0);
  for (int i = 0; i < 16; ++i) plain[i] = static_cast<std::uint8_t>(0x40 + i);
  plain[16] = 0x0a;
  auto env = encrypt(*alice_, plain);

  Bytes mask(16, 0);
  mask[0] = 0x0f;
  auto out = decrypt(*bob_, forge_sample_type(env, 0, mask));
  EXPECT_EQ(out[16], 0x05);
  EXPECT_NE(Bytes(out.begin(), out.begin() + 16), Bytes(plain.begin(), plain.begin() + 16));
  EXPECT_TRUE(std::equal(out.begin() + 17, out.end(), plain.begin() + 17));
}

TEST_F(AovercTest, ZeroMaskIsIdentity) {
  auto plain = to_bytes("unchanged by a zero mask, still decrypts fine");
  auto env = encrypt(*alice_, plain);
  auto same = forge_sample_type(env, 1, Bytes(16, 0));
  EXPECT_EQ(same, env);
  EXPECT_EQ(decrypt(*bob_, same), plain);
}

TEST_F(AovercTest, BlockOutOfRange) {
  auto env = encrypt(*alice_, Bytes(20, 1));
  ASSERT_EQ(env.sed.size(), 32u);
  EXPECT_NO_THROW(forge_sample_type(env, 1, Bytes(16, 1)));
  try {
    forge_sample_type(env, 2, Bytes(16, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BlockOutOfRange);
  }
  EXPECT_THROW(forge_sample_type(env, 0, Bytes(15, 1)), Error);
}

TEST_F(AovercTest, PaddingErrors) {
  EXPECT_EQ(pkcs7_pad(Bytes(16, 7)).size(), 32u);
  EXPECT_EQ(pkcs7_pad(Bytes(15, 7)).back(), 0x01);
  EXPECT_EQ(pkcs7_unpad(pkcs7_pad(Bytes(17, 3))), Bytes(17, 3));
  Bytes bad(16, 0);
  EXPECT_THROW(pkcs7_unpad(bad), Error);
  bad.back() = 17;
  EXPECT_THROW(pkcs7_unpad(bad), Error);
  bad[14] = 1;
  bad[15] = 2;
  EXPECT_THROW(pkcs7_unpad(bad), Error);

  auto env = encrypt(*alice_, Bytes(16, 9));
  env.sed.pop_back();
  EXPECT_EQ(code_of(*bob_, env, Mode::Faithful), Errc::PaddingInvalid);
}

TEST_F(AovercTest, TamperedLastBlockIsPaddingOrGarbage) {
  Gen g(6);
  int padding_errors = 0;
  for (int t = 0; t < 50; ++t) {
    auto env = encrypt(*alice_, g.bytes(32));
    auto forged = forge_sample_type(env, 2, g.bytes(16));
    auto c = code_of(*bob_, forged, Mode::Faithful);
    EXPECT_TRUE(c == Errc::PaddingInvalid || c == Errc::Io);
    padding_errors += c == Errc::PaddingInvalid;
  }
  EXPECT_GT(padding_errors, 40);
}

TEST_F(AovercTest, RecordRoundTrip) {
  auto env = encrypt(*alice_, to_bytes("record"));
  auto rec = encode_record(env);
  EXPECT_EQ(rec[0], 3);
  EXPECT_EQ(to_string(ByteView(rec).subspan(1, 3)), "ekd");
  EXPECT_EQ(decode_record(rec), env);

  Gen g(7);
  for (int i = 0; i < 2000; ++i) {
    auto junk = g.bytes_up_to(64);
    try {
      decode_record(junk);
    } catch (const Error&) {
    }
  }
  EXPECT_THROW(decode_record(Bytes{}), Error);
  auto dup = rec;
  append(dup, ByteView(rec).subspan(0, 4 + 4 + env.ekd.size()));
  EXPECT_THROW(decode_record(dup), Error);
}

TEST(AovercVectors, PinnedFile) {
  std::ifstream in(WS_AOVERC_VECTORS);
  ASSERT_TRUE(in.good());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto v = vector_from_json(line);
    EXPECT_TRUE(check_vector(v)) << n;
    EXPECT_EQ(v.sed, oracle_cbc(v.k2, v.plaintext)) << n;
    auto broken = v;
    broken.sed[0] ^= 1;
    EXPECT_FALSE(check_vector(broken));
    ++n;
  }
  EXPECT_GE(n, 3);
}

TEST(AovercVectors, JsonRoundTrip) {
  Gen g(8);
  auto v = make_vector(g.bytes(40), Ephemeral{g.bytes(16), g.bytes(16)});
  EXPECT_TRUE(check_vector(v));
  auto back = vector_from_json(vector_to_json(v));
  EXPECT_EQ(back.ekd, v.ekd);
  EXPECT_EQ(back.rsa_priv, v.rsa_priv);
  EXPECT_TRUE(check_vector(back));
  EXPECT_THROW(vector_from_json("{\"k1\":\"00\"}"), Error);
  EXPECT_THROW(vector_from_json("not json"), Error);
}
