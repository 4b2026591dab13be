#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "witchstack/harness/phone.hpp"

namespace httplib {
class Server;
}

namespace witchstack::harness {

struct ControlApiOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  // Required to bind anything other than a loopback address.
  bool allow_remote = false;
  std::chrono::milliseconds counter_poll{200};
};

// HTTP+JSON control surface over a running phone endpoint.
//   GET  /status
//   GET  /firewall/rules        PUT /firewall/rules
//   GET  /firewall/counters
//   GET  /health/samples?type=&from=&to=&tombstones=
//   POST /health/harden-delete  {"uuid": "..."}
//   GET  /events?since=
//   PUT  /settings              {"strict": bool, "health_mode": "faithful"|"aead"}
//   GET  /stream                text/event-stream of feed events and counter deltas
class ControlApi {
 public:
  // Throws PortInUse, or Io for a non-loopback host without allow_remote.
  ControlApi(PhoneEndpoint& phone, ControlApiOptions opt = {});
  ~ControlApi();
  ControlApi(const ControlApi&) = delete;
  ControlApi& operator=(const ControlApi&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void routes();
  void poll_counters();

  PhoneEndpoint& phone_;
  ControlApiOptions opt_;
  std::unique_ptr<httplib::Server> server_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread server_thread_;
  std::thread poller_;
};

// Always-present helpers shared by the CLI.
std::string status_json(const PhoneStatus& st);
std::string counters_json(const std::vector<shoes::TrafficCounter>& counters);
std::string samples_json(const std::vector<nanosync::StoredSample>& rows);
std::string events_json(const std::vector<SecurityEvent>& events, std::size_t first_index = 0);
// Accepts 32 hex digits with or without dashes. Throws Malformed.
Uuid parse_uuid(const std::string& text);
// Name from the sample type table or a decimal/0x code. Throws Malformed.
std::uint8_t parse_sample_type(const std::string& text);

}  // namespace witchstack::harness
