#include "witchstack/aoverc/aoverc.hpp"

#include <json.hpp>

namespace witchstack::aoverc {

namespace {

const Bytes kZeroIv(kBlockSize, 0);
const Bytes kZeroNonce(crypto::kAeadNonceSize, 0);

Bytes concat(ByteView a, ByteView b) {
  Bytes out(a.begin(), a.end());
  append(out, b);
  return out;
}

Keyring recipient_keyring(const TestVector& v) {
  auto rsa = crypto::PrivateKey::from_der(v.rsa_priv);
  auto sign = crypto::PrivateKey::from_der(v.ecdsa_priv);
  return Keyring{rsa, sign, rsa.public_key(), sign.public_key()};
}

}  // namespace

Keyring Keyring::make(crypto::PrivateKey local_rsa, crypto::PrivateKey local_sign,
                      crypto::PublicKey peer_rsa, crypto::PublicKey peer_verify) {
  if (local_rsa.bits() != kRsaBits || peer_rsa.bits() != kRsaBits)
    throw Error(Errc::Crypto, "rsa modulus must be 1280 bits");
  if (local_sign.bits() != 384 || peer_verify.bits() != 384)
    throw Error(Errc::Crypto, "signing key must be P-384");
  return Keyring{std::move(local_rsa), std::move(local_sign), std::move(peer_rsa),
                 std::move(peer_verify)};
}

std::pair<Keyring, Keyring> keyring_pair(int rsa_bits) {
  auto a_rsa = crypto::PrivateKey::generate_rsa(rsa_bits);
  auto b_rsa = crypto::PrivateKey::generate_rsa(rsa_bits);
  auto a_sign = crypto::PrivateKey::generate_ec(crypto::Curve::P384);
  auto b_sign = crypto::PrivateKey::generate_ec(crypto::Curve::P384);
  Keyring a{a_rsa, a_sign, b_rsa.public_key(), b_sign.public_key()};
  Keyring b{b_rsa, b_sign, a_rsa.public_key(), a_sign.public_key()};
  return {std::move(a), std::move(b)};
}

Bytes encode_ekd(const Ekd& ekd) {
  if (ekd.c2.size() > 0xFFFF || ekd.s.size() > 0xFFFF)
    throw Error(Errc::LengthMismatch, "ekd field too long");
  ByteWriter w(5 + ekd.c2.size() + ekd.s.size());
  w.u8(kEkdVersion).u16(static_cast<std::uint16_t>(ekd.c2.size())).raw(ekd.c2);
  w.u16(static_cast<std::uint16_t>(ekd.s.size())).raw(ekd.s);
  return w.take();
}

Ekd decode_ekd(ByteView data) {
  ByteReader r(data);
  if (r.u8() != kEkdVersion) throw Error(Errc::BadVersion, "ekd");
  Ekd out;
  out.c2 = r.bytes(r.u16());
  out.s = r.bytes(r.u16());
  if (!r.empty()) throw Error(Errc::LengthMismatch, "trailing ekd bytes");
  return out;
}

Bytes encode_record(const Envelope& env) {
  ByteWriter w;
  for (auto [key, value] : {std::pair<std::string_view, const Bytes*>{"ekd", &env.ekd},
                            {"sed", &env.sed}}) {
    w.u8(static_cast<std::uint8_t>(key.size())).raw(key);
    w.u32(static_cast<std::uint32_t>(value->size())).raw(*value);
  }
  return w.take();
}

Envelope decode_record(ByteView data) {
  ByteReader r(data);
  std::optional<Bytes> ekd, sed;
  while (!r.empty()) {
    auto key = to_string(r.bytes(r.u8()));
    auto value = r.bytes(r.u32());
    if (key != "ekd" && key != "sed") throw Error(Errc::Malformed, "record key " + key);
    auto& slot = key == "ekd" ? ekd : sed;
    if (slot) throw Error(Errc::Malformed, "duplicate record key " + key);
    slot = std::move(value);
  }
  if (!ekd || !sed) throw Error(Errc::Malformed, "record missing entry");
  return Envelope{std::move(*ekd), std::move(*sed)};
}

Ephemeral Ephemeral::random() {
  return Ephemeral{crypto::random_bytes(kKeySize), crypto::random_bytes(kKeySize)};
}

Bytes pkcs7_pad(ByteView data) {
  Bytes out(data.begin(), data.end());
  auto pad = static_cast<std::uint8_t>(kBlockSize - data.size() % kBlockSize);
  out.insert(out.end(), pad, pad);
  return out;
}

Bytes pkcs7_unpad(ByteView data) {
  if (data.empty() || data.size() % kBlockSize != 0) throw Error(Errc::PaddingInvalid);
  std::uint8_t pad = data.back();
  if (pad == 0 || pad > kBlockSize) throw Error(Errc::PaddingInvalid);
  for (std::size_t i = data.size() - pad; i < data.size(); ++i)
    if (data[i] != pad) throw Error(Errc::PaddingInvalid);
  return Bytes(data.begin(), data.end() - pad);
}

Envelope encrypt(const Keyring& keys, ByteView plaintext, Mode mode) {
  return encrypt_with(keys, plaintext, Ephemeral::random(), mode);
}

Envelope encrypt_with(const Keyring& keys, ByteView plaintext, const Ephemeral& eph,
                      Mode mode) {
  if (plaintext.empty()) throw Error(Errc::Malformed, "empty plaintext");
  if (eph.k1.size() != kKeySize || eph.k2.size() != kKeySize)
    throw Error(Errc::Crypto, "ephemeral keys must be 128 bits");
  Bytes c1 = crypto::aes_ctr(eph.k1, kZeroIv, eph.k2);
  Bytes c2 = keys.peer_rsa.oaep_encrypt(concat(eph.k1, c1));
  Bytes s = keys.local_sign.sign(c2);
  Envelope env;
  if (mode == Mode::Faithful)
    env.sed = crypto::aes_cbc_encrypt(eph.k2, kZeroIv, pkcs7_pad(plaintext));
  else
    env.sed = crypto::aead_seal(crypto::Aead::Aes128Gcm, eph.k2, kZeroNonce, c2, plaintext);
  env.ekd = encode_ekd(Ekd{std::move(c2), std::move(s)});
  return env;
}

Ephemeral unwrap_keys(const Keyring& keys, ByteView ekd_bytes) {
  auto ekd = decode_ekd(ekd_bytes);
  if (!keys.peer_verify.verify(ekd.c2, ekd.s)) throw Error(Errc::SignatureInvalid);
  Bytes k1c1 = keys.local_rsa.oaep_decrypt(ekd.c2);
  if (k1c1.size() != 2 * kKeySize) throw Error(Errc::OaepDecodeFailure, "wrapped key size");
  Ephemeral eph;
  eph.k1.assign(k1c1.begin(), k1c1.begin() + kKeySize);
  eph.k2 = crypto::aes_ctr(eph.k1, kZeroIv, ByteView(k1c1).subspan(kKeySize));
  return eph;
}

Bytes decrypt_detailed(const Keyring& keys, const Envelope& env, Mode mode) {
  auto eph = unwrap_keys(keys, env.ekd);
  if (mode == Mode::Faithful) {
    if (env.sed.empty() || env.sed.size() % kBlockSize != 0) throw Error(Errc::PaddingInvalid);
    return pkcs7_unpad(crypto::aes_cbc_decrypt(eph.k2, kZeroIv, env.sed));
  }
  auto c2 = decode_ekd(env.ekd).c2;
  auto plain = crypto::aead_open(crypto::Aead::Aes128Gcm, eph.k2, kZeroNonce, c2, env.sed);
  if (!plain) throw Error(Errc::TagInvalid);
  return std::move(*plain);
}

Bytes decrypt(const Keyring& keys, const Envelope& env, Mode mode) {
  try {
    return decrypt_detailed(keys, env, mode);
  } catch (const Error&) {
    throw Error(Errc::DecryptFailed);
  }
}

Envelope forge_sample_type(const Envelope& env, std::size_t block_index, ByteView mask) {
  if (mask.size() != kBlockSize) throw Error(Errc::Malformed, "mask must be 16 bytes");
  if ((block_index + 1) * kBlockSize > env.sed.size()) throw Error(Errc::BlockOutOfRange);
  Envelope out = env;
  for (std::size_t i = 0; i < kBlockSize; ++i) out.sed[block_index * kBlockSize + i] ^= mask[i];
  return out;
}

std::string vector_to_json(const TestVector& v) {
  nlohmann::json j{{"rsa_priv", to_hex(v.rsa_priv)}, {"ecdsa_priv", to_hex(v.ecdsa_priv)},
                   {"k1", to_hex(v.k1)},             {"k2", to_hex(v.k2)},
                   {"plaintext", to_hex(v.plaintext)}, {"ekd", to_hex(v.ekd)},
                   {"sed", to_hex(v.sed)}};
  return j.dump();
}

TestVector vector_from_json(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Malformed, e.what());
  }
  auto field = [&](const char* name) {
    if (!j.contains(name) || !j[name].is_string()) throw Error(Errc::Malformed, name);
    return from_hex(j[name].get<std::string>());
  };
  return TestVector{field("rsa_priv"), field("ecdsa_priv"), field("k1"), field("k2"),
                    field("plaintext"), field("ekd"), field("sed")};
}

TestVector make_vector(ByteView plaintext, const Ephemeral& eph) {
  auto rsa = crypto::PrivateKey::generate_rsa(kRsaBits);
  auto sign = crypto::PrivateKey::generate_ec(crypto::Curve::P384);
  Keyring sender{rsa, sign, rsa.public_key(), sign.public_key()};
  auto env = encrypt_with(sender, plaintext, eph);
  return TestVector{rsa.to_der(), sign.to_der(), eph.k1, eph.k2,
                    Bytes(plaintext.begin(), plaintext.end()), env.ekd, env.sed};
}

bool check_vector(const TestVector& v) {
  try {
    auto keys = recipient_keyring(v);
    auto eph = unwrap_keys(keys, v.ekd);
    if (eph.k1 != v.k1 || eph.k2 != v.k2) return false;
    if (crypto::aes_cbc_encrypt(v.k2, kZeroIv, pkcs7_pad(v.plaintext)) != v.sed) return false;
    return decrypt_detailed(keys, Envelope{v.ekd, v.sed}) == v.plaintext;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace witchstack::aoverc
