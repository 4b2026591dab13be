#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "witchstack/common/net.hpp"
#include "witchstack/link/magnet.hpp"
#include "witchstack/link/nrlp.hpp"
#include "witchstack/link/transcript.hpp"

namespace witchstack::link {

// Stand-in for an L2CAP channel: length-delimited frames over a reliable
// stream. On the wire each frame is
//   length(2) | sequence(1) | packets_received(1) | data
// where length counts the two prefix bytes plus data. Both counters are
// free-running mod 256. The transcript receives prefix + data.
//
// One reader and one writer context; send() is additionally mutex-guarded so
// several producers may share the writer side.
class VirtualLink {
 public:
  static constexpr std::size_t kMaxFrameData = 0xffff - 2;

  VirtualLink(net::TcpStream stream, Direction outbound,
              std::shared_ptr<TranscriptWriter> sink = nullptr);
  ~VirtualLink();

  void send(ByteView data);
  // nullopt when the peer closed the link.
  std::optional<Bytes> receive(std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  // Splits the encoded frame across link frames of at most max_fragment bytes.
  void send_nrlp(const NrlpFrame& frame);
  void send_magnet(const MagnetMessage& msg) { send(magnet_encode(msg)); }

  void set_max_fragment(std::size_t n) { max_fragment_ = n == 0 ? kMaxFrameData : n; }
  void close() noexcept;
  bool closed() const noexcept { return closed_; }

  std::uint8_t next_sequence() const noexcept { return send_seq_; }
  std::uint8_t packets_received() const noexcept { return received_; }
  Direction outbound() const noexcept { return outbound_; }

  void register_channel(const std::string& service, std::uint8_t id);
  bool has_channel(const std::string& service) const;

 private:
  net::TcpStream stream_;
  Direction outbound_;
  std::shared_ptr<TranscriptWriter> sink_;
  std::mutex send_mu_;
  std::uint8_t send_seq_ = 0;
  std::atomic<std::uint8_t> received_{0};
  std::size_t max_fragment_ = kMaxFrameData;
  std::atomic<bool> closed_{false};
  mutable std::mutex channel_mu_;
  std::set<std::string> channels_;
};

struct ServiceChannel {
  std::string service;
  std::uint8_t channel_id = 0;
};

// Initiator side: CreateChannel, then AcceptChannel or ErrorResponse.
// Throws ServiceRejected or Timeout.
ServiceChannel negotiate_service_channel(VirtualLink& link, const std::string& service,
                                         std::chrono::milliseconds timeout = std::chrono::seconds(5));

// Responder side: answers requests until one names an advertised service.
ServiceChannel serve_service_channel(VirtualLink& link, const std::set<std::string>& advertised,
                                     std::chrono::milliseconds timeout = std::chrono::seconds(5));

}  // namespace witchstack::link
