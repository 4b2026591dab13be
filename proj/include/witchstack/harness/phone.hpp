#pragma once

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <thread>

#include "witchstack/alloy/nwsc.hpp"
#include "witchstack/alloy/session.hpp"
#include "witchstack/harness/bus.hpp"
#include "witchstack/harness/engine.hpp"
#include "witchstack/harness/feed.hpp"
#include "witchstack/harness/health_sync.hpp"
#include "witchstack/harness/identity.hpp"
#include "witchstack/shoes/proxy.hpp"

namespace witchstack::harness {

inline const std::string kLinkService = "com.apple.terminusLink";

std::vector<alloy::ChannelDescriptor> default_channels();
std::string health_channel_name();

struct PhoneOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string service = kLinkService;
  EngineOptions engine;
  aoverc::Mode health_mode = aoverc::Mode::Faithful;
  std::shared_ptr<nanosync::HealthStore> store;  // in-memory when null
  std::shared_ptr<link::TranscriptWriter> transcript;
  std::shared_ptr<alloy::AlloyTranscript> alloy_transcript;
  shoes::ShoesProxy::Dialer dialer;  // plain TCP when empty
  std::string firewall_file;         // rules are saved here on change when set
};

struct TunnelStatus {
  char protection_class = 'C';
  bool established = false;
  std::string suite;
  std::optional<std::string> peer_wifi;
  bool strict = true;
  std::uint64_t esp_in = 0;
  std::uint64_t esp_out = 0;
};

struct PhoneStatus {
  std::size_t connections = 0;
  std::string peer_name;
  std::vector<TunnelStatus> tunnels;
  std::vector<std::string> channels;
  bool strict = true;
  std::string health_mode;
  std::uint16_t link_port = 0;
};

// Phone side: accepts virtual links, brings up both tunnels, serves the
// Alloy control and data channels, the health sync topic and the Shoes proxy.
class PhoneEndpoint {
 public:
  // Throws PortInUse, BadIdentityFile for a non-phone identity.
  PhoneEndpoint(Identity id, PhoneOptions opt);
  ~PhoneEndpoint();
  PhoneEndpoint(const PhoneEndpoint&) = delete;
  PhoneEndpoint& operator=(const PhoneEndpoint&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return listener_port_; }

  // A connection with both tunnels and at least one data channel.
  bool wait_ready(std::chrono::milliseconds timeout) const;
  // Waits until `n` data channels are open on the latest connection.
  bool wait_channels(std::size_t n, std::chrono::milliseconds timeout) const;

  std::shared_ptr<nanosync::HealthStore> store() const { return store_; }
  shoes::Firewall& firewall() { return firewall_; }
  shoes::TrafficCounters& counters() { return counters_; }
  shoes::NetworkState& network() { return network_; }
  std::shared_ptr<SecurityLog> log() const { return log_; }
  EventFeed& feed() { return feed_; }
  HealthSyncServer& health() { return *health_; }

  void set_strict(bool strict);
  void set_health_mode(aoverc::Mode m);
  // Persists the firewall when a file is configured.
  void firewall_changed();

  PhoneStatus status() const;
  // Engine of the most recent connection.
  std::shared_ptr<LinkEngine> engine() const;

 private:
  struct Connection;
  void accept_loop();
  void serve(net::TcpStream stream);
  void wire(const std::shared_ptr<Connection>& c);

  Identity id_;
  PhoneOptions opt_;
  net::TcpListener listener_;
  std::uint16_t listener_port_ = 0;
  std::shared_ptr<SecurityLog> log_;
  std::shared_ptr<nanosync::HealthStore> store_;
  std::unique_ptr<HealthSyncServer> health_;
  shoes::Firewall firewall_;
  shoes::TrafficCounters counters_;
  shoes::NetworkState network_;
  std::unique_ptr<shoes::ShoesProxy> proxy_;
  EventFeed feed_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::list<std::shared_ptr<Connection>> connections_;
  std::vector<std::thread> threads_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> started_{false};
  std::thread acceptor_;
};

}  // namespace witchstack::harness
