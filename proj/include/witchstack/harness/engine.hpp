#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "witchstack/common/events.hpp"
#include "witchstack/harness/keylog.hpp"
#include "witchstack/harness/mux.hpp"
#include "witchstack/ike/session.hpp"
#include "witchstack/link/virtual_link.hpp"

namespace witchstack::harness {

std::uint8_t esp_frame_type(ike::ProtectionClass c) noexcept;

struct EngineOptions {
  bool initiator = false;
  ike::SuiteProfile profile = ike::series9_profile();
  bool strict_notify = true;
  // Advertised to the peer; a UDP socket is bound on it.
  std::optional<ike::WifiAddress> local_wifi;
  // Once the peer's Wi-Fi address is known, tunnel traffic goes there by UDP.
  bool wifi_routing = false;
  ike::KeepaliveConfig keepalive;
  bool run_keepalive = true;
  std::optional<Bytes> prelude;
  std::optional<ike::ProxyEndpoint> proxy;
  std::chrono::milliseconds handshake_timeout{5000};
  std::shared_ptr<SecurityLog> log;
  std::shared_ptr<KeyLog> keylog;
};

struct EngineStats {
  std::uint64_t esp_in = 0;
  std::uint64_t esp_out = 0;
  std::uint64_t esp_dropped = 0;
  std::uint64_t ike_in = 0;
  std::uint64_t wifi_out = 0;
  std::uint64_t wifi_in = 0;
};

// NRLP over a virtual link, carrying IKE for both protection classes and a
// stream multiplexer inside each ESP tunnel.
class LinkEngine {
 public:
  using EffectObserver = std::function<void(ike::ProtectionClass, const ike::NotifyEffect&)>;

  LinkEngine(std::unique_ptr<link::VirtualLink> link, ike::DeviceIdentity identity,
             ike::PeerKeys peer, EngineOptions opt);
  ~LinkEngine();
  LinkEngine(const LinkEngine&) = delete;
  LinkEngine& operator=(const LinkEngine&) = delete;

  void start();
  // Initiator only: class C, then class D. Throws HandshakeFailure.
  void establish();
  bool wait_established(std::chrono::milliseconds timeout) const;
  bool established(ike::ProtectionClass c) const;
  // Wait until the link goes away.
  bool wait_closed(std::chrono::milliseconds timeout) const;
  bool closed() const { return link_->closed(); }

  void listen(ike::ProtectionClass c, std::uint16_t port, InnerMux::Acceptor on_accept);
  // Throws SessionDown when the class has no tunnel.
  StreamPtr open(ike::ProtectionClass c, std::uint16_t port);

  // Sends one keepalive request now. Returns false when the session went down.
  bool keepalive_now(ike::ProtectionClass c);
  void set_strict(bool strict);
  void set_on_effect(EffectObserver f);

  Bytes state_hash(ike::ProtectionClass c) const;
  std::optional<ike::NotifyState> notify_state(ike::ProtectionClass c) const;
  std::optional<ike::HandshakeResult> handshake(ike::ProtectionClass c) const;
  EngineStats stats() const;
  std::uint16_t wifi_port() const { return udp_.port(); }
  const EngineOptions& options() const { return opt_; }

  void stop();

 private:
  class Mailbox;
  struct Slot {
    mutable std::mutex mu;
    std::unique_ptr<ike::IkeSession> session;
    std::shared_ptr<InnerMux> mux;
  };

  Slot& slot(ike::ProtectionClass c) { return c == ike::ProtectionClass::C ? c_ : d_; }
  const Slot& slot(ike::ProtectionClass c) const { return c == ike::ProtectionClass::C ? c_ : d_; }

  void read_loop();
  void udp_loop();
  void keepalive_loop();
  void dispatch(const link::NrlpFrame& frame);
  void handle_ike(const Bytes& wire);
  void handle_esp(ike::ProtectionClass c, ByteView wire);
  void install(ike::HandshakeResult hs);
  void session_down(ike::ProtectionClass c);
  void transmit_locked(Slot& s, std::uint8_t type, Bytes payload);
  void send_link(std::uint8_t type, Bytes payload);
  void notify(ike::ProtectionClass c, const std::vector<ike::NotifyEffect>& effects);

  std::unique_ptr<link::VirtualLink> link_;
  std::mutex link_send_mu_;
  ike::DeviceIdentity identity_;
  ike::PeerKeys peer_;
  EngineOptions opt_;
  Slot c_;
  Slot d_;
  net::UdpSocket udp_;

  std::mutex hs_mu_;
  std::map<std::uint64_t, std::shared_ptr<Mailbox>> pending_;
  std::shared_ptr<Mailbox> initiating_;
  std::vector<std::thread> hs_threads_;

  std::map<std::uint16_t, InnerMux::Acceptor> listeners_c_;
  std::map<std::uint16_t, InnerMux::Acceptor> listeners_d_;
  std::mutex listen_mu_;

  std::mutex observer_mu_;
  EffectObserver on_effect_;

  mutable std::mutex state_mu_;
  mutable std::condition_variable state_cv_;
  bool link_gone_ = false;

  std::atomic<bool> stopping_{false};
  std::atomic<bool> started_{false};
  std::thread reader_;
  std::thread udp_reader_;
  std::thread keepalive_;

  std::atomic<std::uint64_t> esp_in_{0}, esp_out_{0}, esp_dropped_{0}, ike_in_{0}, wifi_out_{0},
      wifi_in_{0};
};

}  // namespace witchstack::harness
