#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "witchstack/common/bytes.hpp"

namespace witchstack::net {

using Millis = std::chrono::milliseconds;

// Owning TCP socket. shutdown() may be called from another thread to unblock
// a pending read; the descriptor itself is released in the destructor.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  ~TcpStream();
  TcpStream(TcpStream&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  TcpStream& operator=(TcpStream&& o) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  // Resolves `host` (DNS allowed) and connects. Throws ConnectFailure.
  static TcpStream connect(const std::string& host, std::uint16_t port,
                           Millis timeout = Millis(3000));

  void write_all(ByteView data);
  // Reads exactly n bytes. nullopt on EOF before the first byte; throws Io on
  // EOF mid-read and Timeout when the optional deadline passes.
  std::optional<Bytes> read_exact(std::size_t n, std::optional<Millis> timeout = std::nullopt);
  // Reads up to max bytes; empty result means EOF.
  Bytes read_some(std::size_t max, std::optional<Millis> timeout = std::nullopt);

  void shutdown_write() noexcept;
  void shutdown() noexcept;
  bool valid() const noexcept { return fd_ >= 0; }
  int fd() const noexcept { return fd_; }
  std::uint16_t local_port() const;
  std::uint16_t peer_port() const;

 private:
  bool wait_readable(std::optional<Millis> timeout);
  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  ~TcpListener();
  TcpListener(TcpListener&& o) noexcept : fd_(o.fd_.exchange(-1)), port_(o.port_) {}
  TcpListener& operator=(TcpListener&& o) noexcept;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  // Port 0 picks an ephemeral port. Throws PortInUse.
  static TcpListener bind(const std::string& host, std::uint16_t port);

  // nullopt on timeout or after close().
  std::optional<TcpStream> accept(std::optional<Millis> timeout = std::nullopt);
  void close() noexcept;
  std::uint16_t port() const noexcept { return port_; }

 private:
  std::atomic<int> fd_{-1};
  std::uint16_t port_ = 0;
};

struct Datagram {
  Bytes data;
  std::string host;
  std::uint16_t port = 0;
};

// IPv4 datagram socket.
class UdpSocket {
 public:
  UdpSocket() = default;
  ~UdpSocket();
  UdpSocket(UdpSocket&& o) noexcept : fd_(o.fd_.exchange(-1)), port_(o.port_) {}
  UdpSocket& operator=(UdpSocket&& o) noexcept;
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  // Port 0 picks an ephemeral port. Throws PortInUse.
  static UdpSocket bind(const std::string& host, std::uint16_t port);

  void send_to(ByteView data, const std::string& host, std::uint16_t port);
  // nullopt on timeout or after close().
  std::optional<Datagram> receive(std::optional<Millis> timeout = std::nullopt);
  void close() noexcept;
  std::uint16_t port() const noexcept { return port_; }

 private:
  std::atomic<int> fd_{-1};
  std::uint16_t port_ = 0;
};

}  // namespace witchstack::net
