#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "witchstack/common/bytes.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/crypto/crypto.hpp"

namespace witchstack::ike {

enum class ProtectionClass : std::uint8_t { C = 'C', D = 'D' };

std::string_view class_label(ProtectionClass c) noexcept;

// Transform identifiers use the IANA IKEv2 constants.
enum class EncrAlg : std::uint16_t { AesGcm16_256 = 20, ChaCha20Poly1305 = 28 };
enum class PrfAlg : std::uint16_t { HmacSha2_256 = 5, HmacSha2_512 = 7 };
enum class DhGroup : std::uint16_t { Modp8192 = 18, Ecp521 = 21, Curve25519 = 31, Curve448 = 32 };
enum class SigHash : std::uint16_t { Identity = 5, Sha2_256 = 2 };

std::string_view encr_name(EncrAlg a) noexcept;
std::string_view prf_name(PrfAlg a) noexcept;
std::string_view dh_name(DhGroup g) noexcept;

crypto::Aead aead_for(EncrAlg a) noexcept;
crypto::Hash hash_for(PrfAlg a) noexcept;

bool is_implemented(EncrAlg a) noexcept;
bool is_implemented(PrfAlg a) noexcept;
bool is_implemented(DhGroup g) noexcept;

// Advertised algorithms in preference order.
struct SuiteProfile {
  std::string name;
  std::vector<EncrAlg> encryption;
  std::vector<PrfAlg> prf;
  std::vector<DhGroup> dh;
  std::vector<SigHash> signature_hash;
};

// Lists as advertised by the two measured watch generations.
SuiteProfile series5_profile();
SuiteProfile series9_profile();

struct NegotiatedSuite {
  EncrAlg encryption;
  PrfAlg prf;
  DhGroup dh;
  friend bool operator==(const NegotiatedSuite&, const NegotiatedSuite&) = default;
};

// First entry of the initiator's list that the responder also offers and this
// implementation supports. Throws NoCommonSuite.
template <typename T>
T pick_first_common(const std::vector<T>& initiator, const std::vector<T>& responder) {
  for (const T& candidate : initiator) {
    if (!is_implemented(candidate)) continue;
    for (const T& r : responder)
      if (r == candidate) return candidate;
  }
  throw Error(Errc::NoCommonSuite);
}

NegotiatedSuite negotiate_suite(const SuiteProfile& initiator, const SuiteProfile& responder);

using Ipv6 = std::array<std::uint8_t, 16>;
std::string ipv6_to_string(const Ipv6& a);

struct WifiAddress {
  bool is_v6 = false;
  std::array<std::uint8_t, 16> ip{};  // IPv4 uses the first four bytes
  std::uint16_t port = 0;

  static WifiAddress v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d,
                        std::uint16_t port);
  static WifiAddress v6(const Ipv6& ip, std::uint16_t port);
  // "127.0.0.1" style hosts only; anything else is treated as IPv6 text.
  static WifiAddress parse(const std::string& host, std::uint16_t port);
  std::string host() const;
  std::string to_string() const;
  friend bool operator==(const WifiAddress&, const WifiAddress&) = default;
};

}  // namespace witchstack::ike
