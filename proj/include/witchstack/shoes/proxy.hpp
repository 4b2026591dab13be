#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "witchstack/common/stream.hpp"
#include "witchstack/shoes/codec.hpp"
#include "witchstack/shoes/firewall.hpp"

namespace witchstack::shoes {

// Simulated uplink of the phone, as reply network info bits.
class NetworkState {
 public:
  explicit NetworkState(std::uint8_t flags = netflag::kWifi) : flags_(flags) {}
  std::uint8_t flags() const { return flags_.load(); }
  void set(std::uint8_t flags) { flags_.store(flags & ~(netflag::kDenied | netflag::kReserved)); }

 private:
  std::atomic<std::uint8_t> flags_;
};

// True when every property of the current network is one the request accepts.
bool conditions_satisfied(std::optional<std::uint8_t> condition_flags, std::uint8_t network);

struct ProxyOutcome {
  std::optional<ShoesRequest> request;
  ShoesReply reply;
  std::optional<Errc> error;
  std::string host;
  std::string process;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
};

class ShoesProxy {
 public:
  using Dialer = std::function<StreamPtr(const std::string& host, std::uint16_t port)>;
  using Observer = std::function<void(const ProxyOutcome&)>;

  ShoesProxy(Firewall& firewall, TrafficCounters& counters, NetworkState& network,
             Dialer dialer = tcp_dialer());

  static Dialer tcp_dialer();

  // Reads one request from client, replies, and splices until both
  // directions finish. Never throws for protocol-level failures.
  ProxyOutcome handle(StreamPtr client);
  // handle() on a background thread.
  void spawn(StreamPtr client);
  void join_all();
  void set_observer(Observer o) { observer_ = std::move(o); }
  void set_request_timeout(std::chrono::milliseconds t) { request_timeout_ = t; }

 private:
  ProxyOutcome deny(ProxyOutcome out, std::uint8_t code, Errc err, ByteStream& client);
  void splice(ByteStream& client, ByteStream& dest, ProxyOutcome& out, const TrafficKey& key);

  Firewall& firewall_;
  TrafficCounters& counters_;
  NetworkState& network_;
  Dialer dialer_;
  Observer observer_;
  std::chrono::milliseconds request_timeout_{5000};
  std::mutex threads_mu_;
  std::vector<std::thread> threads_;
};

}  // namespace witchstack::shoes
