#include "witchstack/crypto/crypto.hpp"

#include <openssl/core_names.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>

namespace witchstack::crypto {

namespace {

[[noreturn]] void fail(const char* what) {
  unsigned long e = ERR_get_error();
  char buf[256] = {0};
  if (e != 0) ERR_error_string_n(e, buf, sizeof(buf));
  ERR_clear_error();
  throw Error(Errc::Crypto, std::string(what) + (e ? std::string(" (") + buf + ")" : ""));
}

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const noexcept { EVP_CIPHER_CTX_free(c); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* c) const noexcept { EVP_PKEY_CTX_free(c); }
};
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* c) const noexcept { EVP_MD_CTX_free(c); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

const EVP_MD* md_for(Hash h) { return h == Hash::Sha256 ? EVP_sha256() : EVP_sha512(); }

const EVP_CIPHER* cipher_for(Aead alg) {
  switch (alg) {
    case Aead::ChaCha20Poly1305:
      return EVP_chacha20_poly1305();
    case Aead::Aes256Gcm:
      return EVP_aes_256_gcm();
    case Aead::Aes128Gcm:
      return EVP_aes_128_gcm();
  }
  return nullptr;
}

std::shared_ptr<evp_pkey_st> share(EVP_PKEY* p) {
  return std::shared_ptr<evp_pkey_st>(p, EVP_PKEY_free);
}

int as_int(std::size_t n) { return static_cast<int>(n); }

}  // namespace

void PkeyDeleter::operator()(evp_pkey_st* p) const noexcept { EVP_PKEY_free(p); }

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n > 0 && RAND_bytes(out.data(), as_int(n)) != 1) fail("RAND_bytes");
  return out;
}

Bytes sha256(ByteView data) {
  Bytes out(32);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
    fail("EVP_Digest");
  return out;
}

Bytes hmac(Hash hash, ByteView key, ByteView data) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (!HMAC(md_for(hash), key.data(), as_int(key.size()), data.data(), data.size(),
            out.data(), &len))
    fail("HMAC");
  out.resize(len);
  return out;
}

Bytes prf_plus(Hash hash, ByteView key, ByteView seed, std::size_t length) {
  Bytes out;
  Bytes prev;
  for (std::uint8_t counter = 1; out.size() < length; ++counter) {
    if (counter == 0) throw Error(Errc::Crypto, "prf+ output too long");
    Bytes input = prev;
    append(input, seed);
    input.push_back(counter);
    prev = hmac(hash, key, input);
    append(out, prev);
  }
  out.resize(length);
  return out;
}

std::size_t aead_key_size(Aead alg) noexcept { return alg == Aead::Aes128Gcm ? 16 : 32; }

Bytes aead_seal(Aead alg, ByteView key, ByteView nonce, ByteView aad, ByteView plaintext) {
  if (key.size() != aead_key_size(alg) || nonce.size() != kAeadNonceSize)
    throw Error(Errc::Crypto, "aead key/nonce size");
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), cipher_for(alg), nullptr, key.data(), nonce.data()) != 1)
    fail("aead init");
  int len = 0;
  if (!aad.empty() &&
      EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), as_int(aad.size())) != 1)
    fail("aead aad");
  Bytes out(plaintext.size() + kAeadTagSize);
  int written = 0;
  if (!plaintext.empty()) {
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, plaintext.data(),
                          as_int(plaintext.size())) != 1)
      fail("aead update");
    written = len;
  }
  if (EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) fail("aead final");
  written += len;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, kAeadTagSize,
                          out.data() + written) != 1)
    fail("aead tag");
  return out;
}

std::optional<Bytes> aead_open(Aead alg, ByteView key, ByteView nonce, ByteView aad,
                               ByteView sealed) {
  if (key.size() != aead_key_size(alg) || nonce.size() != kAeadNonceSize)
    throw Error(Errc::Crypto, "aead key/nonce size");
  if (sealed.size() < kAeadTagSize) return std::nullopt;
  auto ct = sealed.first(sealed.size() - kAeadTagSize);
  Bytes tag(sealed.end() - kAeadTagSize, sealed.end());
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_DecryptInit_ex(ctx.get(), cipher_for(alg), nullptr, key.data(), nonce.data()) != 1)
    fail("aead init");
  int len = 0;
  if (!aad.empty() &&
      EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), as_int(aad.size())) != 1)
    fail("aead aad");
  Bytes out(ct.size());
  int written = 0;
  if (!ct.empty()) {
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, ct.data(), as_int(ct.size())) != 1)
      fail("aead update");
    written = len;
  }
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, kAeadTagSize, tag.data()) != 1)
    fail("aead set tag");
  if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) != 1) {
    ERR_clear_error();
    return std::nullopt;
  }
  return out;
}

namespace {
Bytes aes_block_mode(const EVP_CIPHER* cipher, ByteView key, ByteView iv, ByteView data,
                     bool encrypt) {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_CipherInit_ex(ctx.get(), cipher, nullptr, key.data(), iv.data(),
                                encrypt ? 1 : 0) != 1)
    fail("aes init");
  EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
  Bytes out(data.size() + 16);
  int len = 0;
  int written = 0;
  if (!data.empty()) {
    if (EVP_CipherUpdate(ctx.get(), out.data(), &len, data.data(), as_int(data.size())) != 1)
      fail("aes update");
    written = len;
  }
  if (EVP_CipherFinal_ex(ctx.get(), out.data() + written, &len) != 1) fail("aes final");
  out.resize(written + len);
  return out;
}

const EVP_CIPHER* cbc_for(std::size_t key_size) {
  return key_size == 16 ? EVP_aes_128_cbc() : EVP_aes_256_cbc();
}
}  // namespace

Bytes aes_cbc_encrypt(ByteView key, ByteView iv, ByteView data) {
  if (data.size() % 16 != 0) throw Error(Errc::Crypto, "cbc input not block aligned");
  return aes_block_mode(cbc_for(key.size()), key, iv, data, true);
}

Bytes aes_cbc_decrypt(ByteView key, ByteView iv, ByteView data) {
  if (data.size() % 16 != 0) throw Error(Errc::Crypto, "cbc input not block aligned");
  return aes_block_mode(cbc_for(key.size()), key, iv, data, false);
}

Bytes aes_ctr(ByteView key, ByteView counter_block, ByteView data) {
  const EVP_CIPHER* c = key.size() == 16 ? EVP_aes_128_ctr() : EVP_aes_256_ctr();
  return aes_block_mode(c, key, counter_block, data, true);
}

Bytes scrypt(std::string_view passphrase, ByteView salt, std::uint64_t n, std::uint64_t r,
             std::uint64_t p, std::size_t length) {
  Bytes out(length);
  if (EVP_PBE_scrypt(passphrase.data(), passphrase.size(), salt.data(), salt.size(), n, r, p,
                     256ull * 1024 * 1024, out.data(), out.size()) != 1)
    fail("scrypt");
  return out;
}

X25519KeyPair x25519_generate() {
  PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_X25519, nullptr));
  EVP_PKEY* raw = nullptr;
  if (!ctx || EVP_PKEY_keygen_init(ctx.get()) != 1 || EVP_PKEY_keygen(ctx.get(), &raw) != 1)
    fail("x25519 keygen");
  PkeyPtr key(raw);
  X25519KeyPair kp{Bytes(32), Bytes(32)};
  std::size_t len = 32;
  if (EVP_PKEY_get_raw_private_key(key.get(), kp.private_key.data(), &len) != 1) fail("x25519 priv");
  len = 32;
  if (EVP_PKEY_get_raw_public_key(key.get(), kp.public_key.data(), &len) != 1) fail("x25519 pub");
  return kp;
}

Bytes x25519_shared(ByteView private_key, ByteView peer_public) {
  if (private_key.size() != 32 || peer_public.size() != 32)
    throw Error(Errc::Crypto, "x25519 key size");
  PkeyPtr priv(EVP_PKEY_new_raw_private_key(EVP_PKEY_X25519, nullptr, private_key.data(), 32));
  PkeyPtr pub(EVP_PKEY_new_raw_public_key(EVP_PKEY_X25519, nullptr, peer_public.data(), 32));
  if (!priv || !pub) fail("x25519 load");
  PkeyCtx ctx(EVP_PKEY_CTX_new(priv.get(), nullptr));
  Bytes out(32);
  std::size_t len = out.size();
  if (!ctx || EVP_PKEY_derive_init(ctx.get()) != 1 ||
      EVP_PKEY_derive_set_peer(ctx.get(), pub.get()) != 1 ||
      EVP_PKEY_derive(ctx.get(), out.data(), &len) != 1)
    fail("x25519 derive");
  return out;
}

PrivateKey PrivateKey::generate_ec(Curve curve) {
  EVP_PKEY* raw = EVP_EC_gen(curve == Curve::P256 ? "P-256" : "P-384");
  if (!raw) fail("ec keygen");
  return PrivateKey(share(raw));
}

PrivateKey PrivateKey::generate_rsa(int bits) {
  EVP_PKEY* raw = EVP_RSA_gen(static_cast<unsigned int>(bits));
  if (!raw) fail("rsa keygen");
  return PrivateKey(share(raw));
}

PrivateKey PrivateKey::from_der(ByteView der) {
  const unsigned char* p = der.data();
  EVP_PKEY* raw = d2i_AutoPrivateKey(nullptr, &p, static_cast<long>(der.size()));
  if (!raw) {
    ERR_clear_error();
    throw Error(Errc::Crypto, "private key DER");
  }
  return PrivateKey(share(raw));
}

Bytes PrivateKey::to_der() const {
  PKCS8_PRIV_KEY_INFO* info = EVP_PKEY2PKCS8(key_.get());
  if (!info) fail("pkcs8");
  unsigned char* buf = nullptr;
  int len = i2d_PKCS8_PRIV_KEY_INFO(info, &buf);
  PKCS8_PRIV_KEY_INFO_free(info);
  if (len <= 0) fail("pkcs8 der");
  Bytes out(buf, buf + len);
  OPENSSL_free(buf);
  return out;
}

PublicKey PrivateKey::public_key() const {
  // Round-trip through SPKI so the public handle never carries private material.
  unsigned char* buf = nullptr;
  int len = i2d_PUBKEY(key_.get(), &buf);
  if (len <= 0) fail("spki");
  Bytes der(buf, buf + len);
  OPENSSL_free(buf);
  return PublicKey::from_der(der);
}

int PrivateKey::bits() const { return EVP_PKEY_get_bits(key_.get()); }

namespace {
Bytes digest_sign(EVP_PKEY* key, ByteView message) {
  MdCtx ctx(EVP_MD_CTX_new());
  std::size_t len = 0;
  if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, EVP_sha256(), nullptr, key) != 1 ||
      EVP_DigestSign(ctx.get(), nullptr, &len, message.data(), message.size()) != 1)
    fail("sign init");
  Bytes sig(len);
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, message.data(), message.size()) != 1)
    fail("sign");
  sig.resize(len);
  return sig;
}

void set_oaep(EVP_PKEY_CTX* ctx) {
  if (EVP_PKEY_CTX_set_rsa_padding(ctx, RSA_PKCS1_OAEP_PADDING) != 1 ||
      EVP_PKEY_CTX_set_rsa_oaep_md(ctx, EVP_sha256()) != 1 ||
      EVP_PKEY_CTX_set_rsa_mgf1_md(ctx, EVP_sha256()) != 1)
    fail("oaep params");
}
}  // namespace

Bytes PrivateKey::sign(ByteView message) const { return digest_sign(key_.get(), message); }

Bytes PrivateKey::oaep_decrypt(ByteView ciphertext) const {
  PkeyCtx ctx(EVP_PKEY_CTX_new(key_.get(), nullptr));
  if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) != 1) fail("oaep decrypt init");
  set_oaep(ctx.get());
  std::size_t len = 0;
  if (EVP_PKEY_decrypt(ctx.get(), nullptr, &len, ciphertext.data(), ciphertext.size()) != 1)
    fail("oaep size");
  Bytes out(len);
  if (EVP_PKEY_decrypt(ctx.get(), out.data(), &len, ciphertext.data(), ciphertext.size()) != 1) {
    ERR_clear_error();
    throw Error(Errc::OaepDecodeFailure);
  }
  out.resize(len);
  return out;
}

PublicKey PublicKey::from_der(ByteView der) {
  const unsigned char* p = der.data();
  EVP_PKEY* raw = d2i_PUBKEY(nullptr, &p, static_cast<long>(der.size()));
  if (!raw) {
    ERR_clear_error();
    throw Error(Errc::Crypto, "public key DER");
  }
  return PublicKey(share(raw));
}

Bytes PublicKey::to_der() const {
  unsigned char* buf = nullptr;
  int len = i2d_PUBKEY(key_.get(), &buf);
  if (len <= 0) fail("spki");
  Bytes out(buf, buf + len);
  OPENSSL_free(buf);
  return out;
}

int PublicKey::bits() const { return EVP_PKEY_get_bits(key_.get()); }

bool PublicKey::verify(ByteView message, ByteView signature) const {
  MdCtx ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, EVP_sha256(), nullptr, key_.get()) != 1)
    fail("verify init");
  int rc = EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), message.data(),
                            message.size());
  ERR_clear_error();
  return rc == 1;
}

Bytes PublicKey::oaep_encrypt(ByteView plaintext) const {
  PkeyCtx ctx(EVP_PKEY_CTX_new(key_.get(), nullptr));
  if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) != 1) fail("oaep encrypt init");
  set_oaep(ctx.get());
  std::size_t len = 0;
  if (EVP_PKEY_encrypt(ctx.get(), nullptr, &len, plaintext.data(), plaintext.size()) != 1)
    fail("oaep size");
  Bytes out(len);
  if (EVP_PKEY_encrypt(ctx.get(), out.data(), &len, plaintext.data(), plaintext.size()) != 1)
    throw Error(Errc::PlaintextTooLarge);
  out.resize(len);
  return out;
}

}  // namespace witchstack::crypto
