#include "witchstack/ike/types.hpp"

#include <arpa/inet.h>

namespace witchstack::ike {

std::string_view class_label(ProtectionClass c) noexcept { return c == ProtectionClass::C ? "C" : "D"; }

std::string_view encr_name(EncrAlg a) noexcept {
  return a == EncrAlg::ChaCha20Poly1305 ? "ChaCha20-Poly1305" : "AES-GCM-16 (256bit)";
}

std::string_view prf_name(PrfAlg a) noexcept {
  return a == PrfAlg::HmacSha2_512 ? "HMAC-SHA2-512" : "HMAC-SHA2-256";
}

std::string_view dh_name(DhGroup g) noexcept {
  switch (g) {
    case DhGroup::Curve25519: return "Curve25519";
    case DhGroup::Curve448: return "Curve448";
    case DhGroup::Ecp521: return "521-bit random ECP group";
    case DhGroup::Modp8192: return "8192-bit MODP Group";
  }
  return "unknown";
}

crypto::Aead aead_for(EncrAlg a) noexcept {
  return a == EncrAlg::ChaCha20Poly1305 ? crypto::Aead::ChaCha20Poly1305 : crypto::Aead::Aes256Gcm;
}

crypto::Hash hash_for(PrfAlg a) noexcept {
  return a == PrfAlg::HmacSha2_512 ? crypto::Hash::Sha512 : crypto::Hash::Sha256;
}

bool is_implemented(EncrAlg a) noexcept {
  return a == EncrAlg::AesGcm16_256 || a == EncrAlg::ChaCha20Poly1305;
}
bool is_implemented(PrfAlg a) noexcept {
  return a == PrfAlg::HmacSha2_256 || a == PrfAlg::HmacSha2_512;
}
bool is_implemented(DhGroup g) noexcept { return g == DhGroup::Curve25519; }

SuiteProfile series5_profile() {
  return {"Series 5, watchOS 7.3.3",
          {EncrAlg::ChaCha20Poly1305, EncrAlg::AesGcm16_256},
          {PrfAlg::HmacSha2_512, PrfAlg::HmacSha2_256},
          {DhGroup::Curve25519, DhGroup::Ecp521, DhGroup::Modp8192},
          {SigHash::Sha2_256, SigHash::Identity}};
}

SuiteProfile series9_profile() {
  return {"Series 9, watchOS 10.0.2",
          {EncrAlg::AesGcm16_256, EncrAlg::ChaCha20Poly1305},
          {PrfAlg::HmacSha2_512},
          {DhGroup::Curve448, DhGroup::Curve25519},
          {SigHash::Identity, SigHash::Sha2_256}};
}

NegotiatedSuite negotiate_suite(const SuiteProfile& initiator, const SuiteProfile& responder) {
  return {pick_first_common(initiator.encryption, responder.encryption),
          pick_first_common(initiator.prf, responder.prf),
          pick_first_common(initiator.dh, responder.dh)};
}

std::string ipv6_to_string(const Ipv6& a) {
  char buf[INET6_ADDRSTRLEN] = {0};
  inet_ntop(AF_INET6, a.data(), buf, sizeof(buf));
  return buf;
}

WifiAddress WifiAddress::v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d,
                            std::uint16_t port) {
  WifiAddress w;
  w.ip = {a, b, c, d};
  w.port = port;
  return w;
}

WifiAddress WifiAddress::v6(const Ipv6& ip, std::uint16_t port) {
  WifiAddress w;
  w.is_v6 = true;
  w.ip = ip;
  w.port = port;
  return w;
}

WifiAddress WifiAddress::parse(const std::string& host, std::uint16_t port) {
  WifiAddress w;
  w.port = port;
  if (inet_pton(AF_INET, host.c_str(), w.ip.data()) == 1) return w;
  if (inet_pton(AF_INET6, host.c_str(), w.ip.data()) == 1) {
    w.is_v6 = true;
    return w;
  }
  throw Error(Errc::Malformed, "bad address " + host);
}

std::string WifiAddress::host() const {
  char buf[INET6_ADDRSTRLEN] = {0};
  inet_ntop(is_v6 ? AF_INET6 : AF_INET, ip.data(), buf, sizeof(buf));
  return buf;
}

std::string WifiAddress::to_string() const {
  return is_v6 ? "[" + host() + "]:" + std::to_string(port) : host() + ":" + std::to_string(port);
}

}  // namespace witchstack::ike
