#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <utility>

#include "witchstack/common/bytes.hpp"
#include "witchstack/common/net.hpp"

namespace witchstack {

// Reliable ordered byte stream. One reader and any number of serialized
// writers.
class ByteStream {
 public:
  virtual ~ByteStream() = default;
  virtual void write(ByteView data) = 0;
  // nullopt on orderly close before the first byte; throws Io on close
  // mid-read, Timeout when the deadline passes.
  virtual std::optional<Bytes> read_exact(std::size_t n,
                                          std::optional<std::chrono::milliseconds> timeout = std::nullopt) = 0;
  // Up to max bytes; empty means the peer finished writing.
  virtual Bytes read_some(std::size_t max,
                          std::optional<std::chrono::milliseconds> timeout = std::nullopt) = 0;
  // Signals end of data to the peer; reading continues to work.
  virtual void shutdown_write() = 0;
  // Closes both directions; data already buffered stays readable.
  virtual void close() = 0;
};

using StreamPtr = std::shared_ptr<ByteStream>;

// Two connected in-memory endpoints.
std::pair<StreamPtr, StreamPtr> make_pipe();

class TcpByteStream : public ByteStream {
 public:
  explicit TcpByteStream(net::TcpStream s) : s_(std::move(s)) {}
  void write(ByteView data) override { s_.write_all(data); }
  std::optional<Bytes> read_exact(std::size_t n,
                                  std::optional<std::chrono::milliseconds> timeout) override {
    return s_.read_exact(n, timeout);
  }
  Bytes read_some(std::size_t max, std::optional<std::chrono::milliseconds> timeout) override {
    return s_.read_some(max, timeout);
  }
  void shutdown_write() override { s_.shutdown_write(); }
  void close() override { s_.shutdown(); }
  net::TcpStream& socket() { return s_; }

 private:
  net::TcpStream s_;
};

}  // namespace witchstack
