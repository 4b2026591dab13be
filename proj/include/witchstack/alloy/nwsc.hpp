#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <set>
#include <string>

#include "witchstack/alloy/control.hpp"
#include "witchstack/common/stream.hpp"

namespace witchstack::alloy {

constexpr std::uint8_t kNwscAccept = 0x01;
constexpr std::uint8_t kNwscReject = 0x00;

struct NwscPreamble {
  std::string name;
  Uuid channel_uuid{};
  friend bool operator==(const NwscPreamble&, const NwscPreamble&) = default;
};

// len(1) | name | uuid(16)
Bytes encode_preamble(const NwscPreamble& p);
NwscPreamble decode_preamble(ByteView b);

// Client side. Throws UnknownChannel when the acceptor answers 0x00.
void nwsc_open(ByteStream& s, const ChannelDescriptor& d,
               std::chrono::milliseconds timeout = std::chrono::seconds(5));

// Acceptor side; announced channels come from both ends' SetupChannel
// messages. Thread-safe.
class NwscAcceptor {
 public:
  void announce(const ChannelDescriptor& d);
  void release(const Uuid& channel);
  bool is_open(const Uuid& channel) const;

  // Reads the preamble and answers it. On reject the stream is closed and
  // UnknownChannel or DuplicateOpen thrown.
  ChannelDescriptor accept(ByteStream& s, std::chrono::milliseconds timeout = std::chrono::seconds(5));

 private:
  mutable std::mutex mu_;
  std::map<Uuid, ChannelDescriptor> announced_;
  std::set<Uuid> open_;
};

}  // namespace witchstack::alloy
