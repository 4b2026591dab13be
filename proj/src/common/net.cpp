#include "witchstack/common/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace witchstack::net {

namespace {
std::string errno_text() { return std::strerror(errno); }

int poll_ms(std::optional<Millis> timeout) {
  return timeout ? static_cast<int>(timeout->count()) : -1;
}
}  // namespace

TcpStream::~TcpStream() {
  if (fd_ >= 0) ::close(fd_);
}

TcpStream& TcpStream::operator=(TcpStream&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

TcpStream TcpStream::connect(const std::string& host, std::uint16_t port, Millis timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw Error(Errc::ConnectFailure, host + ": " + gai_strerror(rc));
  std::string last_error = "no address";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
      if (rc == 1) {
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        rc = -1;
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      ::freeaddrinfo(res);
      return TcpStream(fd);
    }
    last_error = errno_text();
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw Error(Errc::ConnectFailure, host + ":" + service + ": " + last_error);
}

void TcpStream::write_all(ByteView data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::Io, "send: " + errno_text());
    }
    off += static_cast<std::size_t>(n);
  }
}

bool TcpStream::wait_readable(std::optional<Millis> timeout) {
  if (!timeout) return true;
  pollfd p{fd_, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, poll_ms(timeout));
  } while (rc < 0 && errno == EINTR);
  return rc > 0;
}

std::optional<Bytes> TcpStream::read_exact(std::size_t n, std::optional<Millis> timeout) {
  Bytes out(n);
  std::size_t off = 0;
  auto deadline = timeout ? std::optional(std::chrono::steady_clock::now() + *timeout)
                          : std::nullopt;
  while (off < n) {
    if (deadline) {
      auto left = std::chrono::duration_cast<Millis>(*deadline - std::chrono::steady_clock::now());
      if (left.count() < 0 || !wait_readable(left)) throw Error(Errc::Timeout, "read");
    }
    ssize_t got = ::recv(fd_, out.data() + off, n - off, 0);
    if (got < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::Io, "recv: " + errno_text());
    }
    if (got == 0) {
      if (off == 0) return std::nullopt;
      throw Error(Errc::Io, "eof mid-read");
    }
    off += static_cast<std::size_t>(got);
  }
  return out;
}

Bytes TcpStream::read_some(std::size_t max, std::optional<Millis> timeout) {
  if (!wait_readable(timeout)) throw Error(Errc::Timeout, "read");
  Bytes out(max);
  while (true) {
    ssize_t got = ::recv(fd_, out.data(), max, 0);
    if (got < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET || errno == ENOTCONN) return {};
      throw Error(Errc::Io, "recv: " + errno_text());
    }
    out.resize(static_cast<std::size_t>(got));
    return out;
  }
}

void TcpStream::shutdown_write() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void TcpStream::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

namespace {
std::uint16_t port_of(int fd, bool peer) {
  sockaddr_storage ss{};
  socklen_t len = sizeof(ss);
  int rc = peer ? ::getpeername(fd, reinterpret_cast<sockaddr*>(&ss), &len)
                : ::getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len);
  if (rc != 0) return 0;
  if (ss.ss_family == AF_INET) return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  if (ss.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
  return 0;
}
}  // namespace

std::uint16_t TcpStream::local_port() const { return port_of(fd_, false); }
std::uint16_t TcpStream::peer_port() const { return port_of(fd_, true); }

TcpListener::~TcpListener() { close(); }

TcpListener& TcpListener::operator=(TcpListener&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_.exchange(-1);
    port_ = o.port_;
  }
  return *this;
}

TcpListener TcpListener::bind(const std::string& host, std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::Io, "socket: " + errno_text());
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(Errc::Io, "bad listen address " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    int err = errno;
    ::close(fd);
    if (err == EADDRINUSE) throw Error(Errc::PortInUse, host + ":" + std::to_string(port));
    throw Error(Errc::Io, "bind: " + std::string(std::strerror(err)));
  }
  if (::listen(fd, 64) != 0) {
    ::close(fd);
    throw Error(Errc::Io, "listen: " + errno_text());
  }
  TcpListener l;
  l.fd_ = fd;
  l.port_ = port_of(fd, false);
  return l;
}

std::optional<TcpStream> TcpListener::accept(std::optional<Millis> timeout) {
  while (true) {
    int lfd = fd_.load();
    if (lfd < 0) return std::nullopt;
    pollfd p{lfd, POLLIN, 0};
    int rc = ::poll(&p, 1, timeout ? static_cast<int>(timeout->count()) : 200);
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) {
      if (timeout) return std::nullopt;
      continue;
    }
    if (p.revents & (POLLERR | POLLNVAL | POLLHUP)) return std::nullopt;
    int fd = ::accept4(lfd, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return std::nullopt;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return TcpStream(fd);
  }
}

void TcpListener::close() noexcept {
  int fd = fd_.exchange(-1);
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
}

UdpSocket::~UdpSocket() { close(); }

UdpSocket& UdpSocket::operator=(UdpSocket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_.exchange(-1);
    port_ = o.port_;
  }
  return *this;
}

UdpSocket UdpSocket::bind(const std::string& host, std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::Io, "socket: " + errno_text());
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(Errc::Io, "bad bind address " + host);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    int err = errno;
    ::close(fd);
    if (err == EADDRINUSE) throw Error(Errc::PortInUse, host + ":" + std::to_string(port));
    throw Error(Errc::Io, "bind: " + std::string(std::strerror(err)));
  }
  UdpSocket u;
  u.fd_ = fd;
  u.port_ = port_of(fd, false);
  return u;
}

void UdpSocket::send_to(ByteView data, const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw Error(Errc::Io, "bad datagram address " + host);
  int fd = fd_.load();
  if (fd < 0) throw Error(Errc::Io, "socket closed");
  if (::sendto(fd, data.data(), data.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0)
    throw Error(Errc::Io, "sendto: " + errno_text());
}

std::optional<Datagram> UdpSocket::receive(std::optional<Millis> timeout) {
  auto deadline = timeout ? std::optional(std::chrono::steady_clock::now() + *timeout) : std::nullopt;
  while (true) {
    int fd = fd_.load();
    if (fd < 0) return std::nullopt;
    int slice = 200;
    if (deadline) {
      auto left = std::chrono::duration_cast<Millis>(*deadline - std::chrono::steady_clock::now()).count();
      if (left <= 0) return std::nullopt;
      slice = static_cast<int>(std::min<long>(left, 200));
    }
    pollfd p{fd, POLLIN, 0};
    int rc = ::poll(&p, 1, slice);
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) continue;
    if (p.revents & (POLLERR | POLLNVAL)) return std::nullopt;
    Bytes buf(65536);
    sockaddr_in from{};
    socklen_t len = sizeof(from);
    auto n = ::recvfrom(fd, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return std::nullopt;
    }
    buf.resize(static_cast<std::size_t>(n));
    char host[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &from.sin_addr, host, sizeof host);
    return Datagram{std::move(buf), host, ntohs(from.sin_port)};
  }
}

void UdpSocket::close() noexcept {
  int fd = fd_.exchange(-1);
  if (fd >= 0) ::close(fd);
}

}  // namespace witchstack::net
