#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "witchstack/common/bytes.hpp"
#include "witchstack/crypto/crypto.hpp"
#include "witchstack/ike/types.hpp"

namespace witchstack::ike {

enum class ExchangeType : std::uint8_t { SaInit = 34, Auth = 35, Informational = 37 };

enum class PayloadType : std::uint8_t {
  SecurityAssociation = 33,
  KeyExchange = 34,
  Identification = 35,
  Authentication = 39,
  Nonce = 40,
  Notify = 41,
};

namespace notify {
constexpr std::uint16_t kNoProposalChosen = 14;
constexpr std::uint16_t kAuthenticationFailed = 24;
constexpr std::uint16_t kEncryptedPrelude = 48601;
constexpr std::uint16_t kTerminusVersion = 48602;
constexpr std::uint16_t kDeviceName = 48603;
constexpr std::uint16_t kBuildVersion = 48604;
constexpr std::uint16_t kProxyNotify = 50701;
constexpr std::uint16_t kLinkDirectorMessage = 50702;
constexpr std::uint16_t kInnerAddrInitiatorClassD = 50801;
constexpr std::uint16_t kInnerAddrResponderClassD = 50802;
constexpr std::uint16_t kInnerAddrInitiatorClassC = 50811;
constexpr std::uint16_t kInnerAddrResponderClassC = 50812;
constexpr std::uint16_t kAlwaysOnWifi = 51401;
constexpr std::uint16_t kIsAltAccountDevice = 51501;
}  // namespace notify

// The private notify types; standard error notifies are not included.
bool is_known_notify_type(std::uint16_t type) noexcept;
std::string_view notify_name(std::uint16_t type) noexcept;
const std::vector<std::uint16_t>& known_notify_types();

struct IkePayload {
  std::uint8_t type = 0;
  Bytes body;
  friend bool operator==(const IkePayload&, const IkePayload&) = default;
};

struct NotifyPayload {
  std::uint16_t notify_type = 0;
  Bytes data;
  friend bool operator==(const NotifyPayload&, const NotifyPayload&) = default;
};

IkePayload make_notify(std::uint16_t type, Bytes data);
std::optional<NotifyPayload> as_notify(const IkePayload& p);

constexpr std::uint8_t kFlagEncrypted = 0x01;
constexpr std::uint8_t kFlagInitiator = 0x08;
constexpr std::uint8_t kFlagResponse = 0x20;
constexpr std::size_t kIkeHeaderSize = 27;
constexpr std::size_t kIkeIvSize = 8;

struct IkeHeader {
  std::uint64_t spi_i = 0;
  std::uint64_t spi_r = 0;
  std::uint8_t version = 0x20;
  std::uint8_t exchange = 0;
  std::uint8_t flags = 0;
  std::uint32_t msg_id = 0;
  std::uint32_t length = 0;
};

struct IkeMessage {
  std::uint64_t spi_i = 0;
  std::uint64_t spi_r = 0;
  ExchangeType exchange_type = ExchangeType::Informational;
  bool from_initiator = false;
  bool is_response = false;
  std::uint32_t msg_id = 0;
  bool is_encrypted = false;
  std::vector<IkePayload> payloads;

  std::vector<NotifyPayload> notifies() const;
  std::optional<NotifyPayload> find_notify(std::uint16_t type) const;
  const IkePayload* find(PayloadType type) const;

  friend bool operator==(const IkeMessage&, const IkeMessage&) = default;
};

// Direction-specific AEAD key for encrypted IKE messages.
struct IkeCipher {
  crypto::Aead alg = crypto::Aead::Aes256Gcm;
  Bytes key;
  Bytes salt;  // 4 bytes
};

Bytes encode_payloads(const std::vector<IkePayload>& payloads);
std::vector<IkePayload> decode_payloads(ByteView body);

IkeHeader parse_ike_header(ByteView wire);

// Encrypted messages need `cipher`; the body becomes iv(8) || ciphertext || tag
// with the header as associated data.
Bytes ike_encode(const IkeMessage& msg, const IkeCipher* cipher = nullptr);
// Throws Malformed on structure errors, AuthTagMismatch when an encrypted
// body does not verify or no cipher is supplied for it.
IkeMessage ike_decode(ByteView wire, const IkeCipher* cipher = nullptr);

// SA payload body: per transform kind, kind(1) count(1) ids(2 each).
struct SaProposal {
  std::vector<std::uint16_t> encryption;
  std::vector<std::uint16_t> prf;
  std::vector<std::uint16_t> dh;
  friend bool operator==(const SaProposal&, const SaProposal&) = default;
};
Bytes encode_sa(const SaProposal& sa);
SaProposal decode_sa(ByteView body);
SaProposal proposal_from(const SuiteProfile& p);

}  // namespace witchstack::ike
