#pragma once

#include <atomic>
#include <thread>

#include "witchstack/common/net.hpp"

namespace witchstack::harness {

// Loopback TCP echo server that counts what reaches it.
class EchoTap {
 public:
  explicit EchoTap(const std::string& host = "127.0.0.1", std::uint16_t port = 0);
  ~EchoTap();
  EchoTap(const EchoTap&) = delete;
  EchoTap& operator=(const EchoTap&) = delete;

  std::uint16_t port() const { return listener_.port(); }
  std::uint64_t bytes_received() const { return received_; }
  std::uint64_t connections() const { return connections_; }

 private:
  net::TcpListener listener_;
  std::atomic<std::uint64_t> received_{0};
  std::atomic<std::uint64_t> connections_{0};
  std::thread thread_;
};

}  // namespace witchstack::harness
