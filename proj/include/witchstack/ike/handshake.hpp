#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "witchstack/common/bytes.hpp"
#include "witchstack/crypto/crypto.hpp"
#include "witchstack/ike/message.hpp"
#include "witchstack/ike/tunnel.hpp"
#include "witchstack/ike/types.hpp"

namespace witchstack::ike {

struct DeviceIdentity {
  std::string device_name;
  std::string build_version;
  std::uint16_t terminus_version = 0x000d;
  crypto::PrivateKey class_c_key;
  crypto::PrivateKey class_d_key;

  const crypto::PrivateKey& key(ProtectionClass c) const {
    return c == ProtectionClass::C ? class_c_key : class_d_key;
  }
  static DeviceIdentity generate(std::string name, std::string build);
};

struct PeerKeys {
  crypto::PublicKey class_c;
  crypto::PublicKey class_d;

  const crypto::PublicKey& key(ProtectionClass c) const {
    return c == ProtectionClass::C ? class_c : class_d;
  }
  static PeerKeys of(const DeviceIdentity& id);
};

struct ProxyEndpoint {
  Ipv6 address{};
  std::uint16_t port = 0;
  friend bool operator==(const ProxyEndpoint&, const ProxyEndpoint&) = default;
};
Bytes encode_proxy_endpoint(const ProxyEndpoint& p);
std::optional<ProxyEndpoint> decode_proxy_endpoint(ByteView data);

// Blocking message channel carrying whole IKE messages.
class IkeTransport {
 public:
  virtual ~IkeTransport() = default;
  virtual void send(Bytes message) = 0;
  // Throws Timeout.
  virtual Bytes receive(std::chrono::milliseconds timeout) = 0;
};

struct HandshakeOptions {
  SuiteProfile profile = series9_profile();
  std::optional<WifiAddress> local_wifi;
  std::optional<Bytes> prelude;             // initiator only
  std::optional<ProxyEndpoint> proxy;       // responder, class D
  bool strict_notify_mode = true;
  std::chrono::milliseconds timeout{5000};
};

struct PeerInfo {
  std::uint16_t terminus_version = 0;
  std::string device_name;
  std::string build_version;
  friend bool operator==(const PeerInfo&, const PeerInfo&) = default;
};

struct KeyMaterial {
  DirectionalKey ike_i2r;
  DirectionalKey ike_r2i;
  DirectionalKey esp_i2r;
  DirectionalKey esp_r2i;
};

// prf+(prf(Ni | Nr, dh), Ni | Nr | SPIi | SPIr | label).
KeyMaterial derive_keys(PrfAlg prf, ByteView dh_secret, ByteView nonce_i, ByteView nonce_r,
                        std::uint64_t spi_i, std::uint64_t spi_r, ProtectionClass c);

Ipv6 inner_address(ProtectionClass c, bool initiator);

struct HandshakeResult {
  bool initiator = false;
  ProtectionClass protection_class = ProtectionClass::C;
  NegotiatedSuite suite{};
  std::uint64_t spi_i = 0;
  std::uint64_t spi_r = 0;
  KeyMaterial keys;
  TunnelSession tunnel;
  PeerInfo peer;
  std::optional<WifiAddress> local_wifi;
  std::optional<WifiAddress> peer_wifi;
  std::optional<ProxyEndpoint> proxy;
  std::optional<Bytes> prelude_echo;
};

// Errors: AuthFailure, NoCommonSuite, Timeout.
HandshakeResult handshake_initiate(const DeviceIdentity& identity, const PeerKeys& peer,
                                   ProtectionClass c, IkeTransport& transport,
                                   const HandshakeOptions& options = {});
// The class is taken from the initiator's request.
HandshakeResult handshake_respond(const DeviceIdentity& identity, const PeerKeys& peer,
                                  IkeTransport& transport, const HandshakeOptions& options = {});

// Continues a responder handshake whose SA_INIT request was already read.
HandshakeResult handshake_respond_to(const DeviceIdentity& identity, const PeerKeys& peer,
                                     IkeTransport& transport, ByteView sa_init_request,
                                     const HandshakeOptions& options = {});

}  // namespace witchstack::ike
