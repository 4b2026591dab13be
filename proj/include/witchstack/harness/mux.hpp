#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>

#include "witchstack/common/stream.hpp"

namespace witchstack::harness {

// Inner packets carried by a tunnel: kind(1) | conn(4) | port(2) | payload.
enum class SegmentKind : std::uint8_t { Syn = 1, Data = 2, Fin = 3, Rst = 4 };

std::string_view segment_kind_name(std::uint8_t k) noexcept;

struct Segment {
  SegmentKind kind = SegmentKind::Data;
  std::uint32_t conn = 0;
  std::uint16_t port = 0;
  Bytes payload;
  friend bool operator==(const Segment&, const Segment&) = default;
};

constexpr std::size_t kSegmentHeader = 7;
constexpr std::size_t kMaxSegmentPayload = 32 * 1024;

Bytes encode_segment(const Segment& s);
// Throws Malformed.
Segment decode_segment(ByteView wire);

class MuxStream;

// Stream multiplexer over one tunnel. Connection ids opened locally are odd
// on one side and even on the other.
class InnerMux : public std::enable_shared_from_this<InnerMux> {
 public:
  using Sender = std::function<void(Bytes)>;
  using Acceptor = std::function<void(StreamPtr)>;

  // Create through make_shared; streams keep their mux alive.
  InnerMux(Sender send, bool odd_ids);
  ~InnerMux();

  void listen(std::uint16_t port, Acceptor on_accept);
  StreamPtr open(std::uint16_t port);
  // Feeds one decrypted inner packet.
  void deliver(ByteView segment);
  // Resets every connection; later opens fail with SessionDown.
  void shutdown();
  std::size_t open_connections() const;

 private:
  friend class MuxStream;
  void send_segment(const Segment& s);
  void forget(std::uint32_t conn);

  Sender send_;
  std::mutex send_mu_;
  std::atomic<bool> down_{false};
  mutable std::mutex mu_;
  std::map<std::uint16_t, Acceptor> listeners_;
  std::map<std::uint32_t, std::weak_ptr<MuxStream>> conns_;
  std::uint32_t next_id_;
};

}  // namespace witchstack::harness
