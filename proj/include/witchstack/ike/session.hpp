#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "witchstack/common/events.hpp"
#include "witchstack/ike/handshake.hpp"
#include "witchstack/ike/message.hpp"

namespace witchstack::ike {

enum class EffectKind {
  PeerAddressUpdated,
  LinkPreferenceChanged,
  ProxyEndpointUpdated,
  Restarted,
  SessionDown,
};

std::string_view effect_name(EffectKind k) noexcept;

struct NotifyEffect {
  EffectKind kind;
  std::optional<WifiAddress> address;
  std::string detail;
};

struct NotifyState {
  std::optional<WifiAddress> peer_wifi;
  bool prefer_wifi = false;
  std::optional<std::uint8_t> peer_link_state;
  std::optional<bool> prefer_wifi_ack;
  std::optional<ProxyEndpoint> proxy;
  std::uint32_t restarts = 0;
  std::optional<bool> always_on_wifi;
  std::optional<bool> alt_account;
  std::optional<Bytes> prelude;
  PeerInfo peer;
  Bytes wifi_signature;
};

// Ordered hand-off of effects to another thread.
class EffectQueue {
 public:
  void push(NotifyEffect e);
  std::optional<NotifyEffect> pop(std::chrono::milliseconds timeout);
  std::optional<NotifyEffect> try_pop();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<NotifyEffect> q_;
};

struct KeepaliveConfig {
  std::chrono::milliseconds interval{30000};
  int max_missed = 3;
};

// One established IKE SA plus its ESP tunnel. Not internally synchronized:
// callers drive it from a single context.
class IkeSession {
 public:
  IkeSession(HandshakeResult hs, SecurityLog* log = nullptr, KeepaliveConfig ka = {});

  struct Inbound {
    std::vector<NotifyEffect> effects;
    std::optional<Bytes> reply;
  };

  bool owns(std::uint64_t spi_i, std::uint64_t spi_r) const noexcept;
  // Decodes and processes one IKE message addressed to this SA. Malformed or
  // unverifiable input changes nothing.
  Inbound handle(ByteView wire);
  std::vector<NotifyEffect> process_notify(const IkeMessage& msg);

  // Throws PeerUnresponsive once max_missed requests went unanswered.
  Bytes keepalive_tick();
  Bytes informational(std::vector<IkePayload> payloads);

  void set_local_wifi(std::optional<WifiAddress> a) { local_wifi_ = a; }
  const std::optional<WifiAddress>& local_wifi() const { return local_wifi_; }
  void set_strict(bool strict) { tunnel_.strict_notify_mode = strict; }
  bool strict() const { return tunnel_.strict_notify_mode; }

  const NotifyState& state() const { return state_; }
  TunnelSession& tunnel() { return tunnel_; }
  const TunnelSession& tunnel() const { return tunnel_; }
  const HandshakeResult& handshake() const { return hs_; }
  ProtectionClass protection_class() const { return tunnel_.protection_class; }
  bool down() const { return down_; }
  int missed() const { return outstanding_; }
  const KeepaliveConfig& keepalive() const { return ka_; }
  EffectQueue& effects() { return queue_; }
  std::uint64_t unknown_notifies() const { return unknown_notifies_; }

  // SHA-256 over all mutable session state.
  Bytes state_hash() const;

 private:
  void emit(std::vector<NotifyEffect>& out, NotifyEffect e);
  Bytes build(ExchangeType ex, bool response, std::uint32_t msg_id,
              std::vector<IkePayload> payloads);
  std::vector<IkePayload> address_payloads() const;

  HandshakeResult hs_;
  TunnelSession tunnel_;
  IkeCipher send_cipher_;
  IkeCipher recv_cipher_;
  SecurityLog* log_;
  KeepaliveConfig ka_;
  NotifyState state_;
  std::optional<WifiAddress> local_wifi_;
  std::uint32_t next_msg_id_ = 2;
  int outstanding_ = 0;
  bool down_ = false;
  std::uint64_t unknown_notifies_ = 0;
  EffectQueue queue_;
};

}  // namespace witchstack::ike
