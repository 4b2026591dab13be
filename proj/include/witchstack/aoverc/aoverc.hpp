#pragma once

#include <optional>
#include <string>
#include <utility>

#include "witchstack/common/bytes.hpp"
#include "witchstack/crypto/crypto.hpp"

namespace witchstack::aoverc {

constexpr int kRsaBits = 1280;
constexpr std::size_t kKeySize = 16;
constexpr std::size_t kBlockSize = 16;
constexpr std::uint8_t kEkdVersion = 0x01;

// Local keys plus the peer's public halves. Immutable once built.
struct Keyring {
  crypto::PrivateKey local_rsa;
  crypto::PrivateKey local_sign;
  crypto::PublicKey peer_rsa;
  crypto::PublicKey peer_verify;

  // Checks key sizes (RSA exactly 1280 bits, ECDSA 384 bits).
  static Keyring make(crypto::PrivateKey local_rsa, crypto::PrivateKey local_sign,
                      crypto::PublicKey peer_rsa, crypto::PublicKey peer_verify);
};

// Fresh key material for two parties; first talks to second and vice versa.
std::pair<Keyring, Keyring> keyring_pair(int rsa_bits = kRsaBits);

enum class Mode { Faithful, AeadMitigated };

struct Envelope {
  Bytes ekd;
  Bytes sed;
  bool operator==(const Envelope&) const = default;
};

struct Ekd {
  Bytes c2;
  Bytes s;
};

Bytes encode_ekd(const Ekd& ekd);
Ekd decode_ekd(ByteView data);

// Two-entry keyed record carried as an Alloy payload.
Bytes encode_record(const Envelope& env);
Envelope decode_record(ByteView data);

struct Ephemeral {
  Bytes k1;
  Bytes k2;
  static Ephemeral random();
};

Bytes pkcs7_pad(ByteView data);
Bytes pkcs7_unpad(ByteView data);

Envelope encrypt(const Keyring& keys, ByteView plaintext, Mode mode = Mode::Faithful);
// Deterministic in sed given the ephemeral keys.
Envelope encrypt_with(const Keyring& keys, ByteView plaintext, const Ephemeral& eph,
                      Mode mode = Mode::Faithful);

// Every failure surfaces as DecryptFailed.
Bytes decrypt(const Keyring& keys, const Envelope& env, Mode mode = Mode::Faithful);
// Same as decrypt, reporting the specific failure code.
Bytes decrypt_detailed(const Keyring& keys, const Envelope& env, Mode mode = Mode::Faithful);
// Recovers k1 and k2 from ekd after checking the signature.
Ephemeral unwrap_keys(const Keyring& keys, ByteView ekd);

// XORs mask into sed block block_index. ekd is left alone.
Envelope forge_sample_type(const Envelope& env, std::size_t block_index, ByteView mask);

// One test-vector line with randomness pinned.
struct TestVector {
  Bytes rsa_priv;    // recipient RSA key, PKCS#8
  Bytes ecdsa_priv;  // sender signing key, PKCS#8
  Bytes k1;
  Bytes k2;
  Bytes plaintext;
  Bytes ekd;
  Bytes sed;
};

std::string vector_to_json(const TestVector& v);
TestVector vector_from_json(const std::string& line);
TestVector make_vector(ByteView plaintext, const Ephemeral& eph);
// Re-derives everything checkable from a vector: signature, unwrapped keys,
// sed recomputation and plaintext recovery.
bool check_vector(const TestVector& v);

}  // namespace witchstack::aoverc
