#pragma once

#include <memory>
#include <optional>
#include <string_view>

#include "witchstack/common/bytes.hpp"

struct evp_pkey_st;

namespace witchstack::crypto {

Bytes random_bytes(std::size_t n);

enum class Hash { Sha256, Sha512 };

Bytes sha256(ByteView data);
Bytes hmac(Hash hash, ByteView key, ByteView data);
// IKEv2 prf+ construction: T1 = prf(K, S | 0x01), Tn = prf(K, Tn-1 | S | n).
Bytes prf_plus(Hash hash, ByteView key, ByteView seed, std::size_t length);

enum class Aead { ChaCha20Poly1305, Aes256Gcm, Aes128Gcm };

constexpr std::size_t kAeadTagSize = 16;
constexpr std::size_t kAeadNonceSize = 12;

std::size_t aead_key_size(Aead alg) noexcept;

// Returns ciphertext || 16-byte tag.
Bytes aead_seal(Aead alg, ByteView key, ByteView nonce, ByteView aad,
                ByteView plaintext);
// nullopt when the tag does not verify.
std::optional<Bytes> aead_open(Aead alg, ByteView key, ByteView nonce,
                               ByteView aad, ByteView sealed);

// Raw AES-CBC without padding; input must be a multiple of 16 bytes.
Bytes aes_cbc_encrypt(ByteView key, ByteView iv, ByteView data);
Bytes aes_cbc_decrypt(ByteView key, ByteView iv, ByteView data);
// AES-CTR keystream XOR; counter block given as 16 bytes.
Bytes aes_ctr(ByteView key, ByteView counter_block, ByteView data);

Bytes scrypt(std::string_view passphrase, ByteView salt, std::uint64_t n,
             std::uint64_t r, std::uint64_t p, std::size_t length);

struct X25519KeyPair {
  Bytes private_key;  // 32 bytes
  Bytes public_key;   // 32 bytes
};
X25519KeyPair x25519_generate();
Bytes x25519_shared(ByteView private_key, ByteView peer_public);

struct PkeyDeleter {
  void operator()(evp_pkey_st* p) const noexcept;
};
using PkeyPtr = std::unique_ptr<evp_pkey_st, PkeyDeleter>;

enum class Curve { P256, P384 };

// Private or public EC/RSA key. Copies share the immutable handle.
class PublicKey;

class PrivateKey {
 public:
  static PrivateKey generate_ec(Curve curve);
  static PrivateKey generate_rsa(int bits);
  // PKCS#8 DER.
  static PrivateKey from_der(ByteView der);

  Bytes to_der() const;
  PublicKey public_key() const;
  int bits() const;

  Bytes sign(ByteView message) const;  // ECDSA-SHA256, DER signature
  Bytes oaep_decrypt(ByteView ciphertext) const;  // SHA-256 / MGF1-SHA-256

  evp_pkey_st* handle() const noexcept { return key_.get(); }

 private:
  explicit PrivateKey(std::shared_ptr<evp_pkey_st> key) : key_(std::move(key)) {}
  std::shared_ptr<evp_pkey_st> key_;
};

class PublicKey {
 public:
  // SubjectPublicKeyInfo DER.
  static PublicKey from_der(ByteView der);

  Bytes to_der() const;
  int bits() const;

  bool verify(ByteView message, ByteView signature) const;
  Bytes oaep_encrypt(ByteView plaintext) const;

  friend class PrivateKey;

 private:
  explicit PublicKey(std::shared_ptr<evp_pkey_st> key) : key_(std::move(key)) {}
  std::shared_ptr<evp_pkey_st> key_;
};

}  // namespace witchstack::crypto
