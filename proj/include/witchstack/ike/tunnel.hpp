#pragma once

#include <cstdint>
#include <limits>

#include "witchstack/common/bytes.hpp"
#include "witchstack/ike/types.hpp"

namespace witchstack::ike {

// 64-entry sliding anti-replay window. Bit i of the bitmap stands for
// highest - i.
class ReplayWindow {
 public:
  static constexpr std::uint64_t kSize = 64;

  // Throws StaleSequence or ReplayDetected without changing state.
  void check(std::uint64_t seq) const;
  void mark(std::uint64_t seq);

  std::uint64_t highest() const noexcept { return highest_; }
  std::uint64_t bitmap() const noexcept { return bitmap_; }

 private:
  std::uint64_t highest_ = 0;
  std::uint64_t bitmap_ = 0;
};

struct DirectionalKey {
  Bytes key;   // 32 bytes
  Bytes salt;  // 4 bytes
};

constexpr std::uint64_t kMaxSequence = std::numeric_limits<std::uint64_t>::max();
constexpr std::size_t kEspSeqSize = 8;

struct TunnelSession {
  ProtectionClass protection_class = ProtectionClass::C;
  EncrAlg cipher_suite = EncrAlg::AesGcm16_256;
  DirectionalKey send;
  DirectionalKey recv;
  std::uint64_t send_seq = 1;
  ReplayWindow replay_window;
  Ipv6 inner_local{};
  Ipv6 inner_peer{};
  bool strict_notify_mode = true;
};

// seq(8) || ciphertext || tag. Throws SequenceExhausted.
Bytes tunnel_seal(TunnelSession& session, ByteView inner_packet);
// Throws AuthTagMismatch, ReplayDetected, StaleSequence.
Bytes tunnel_open(TunnelSession& session, ByteView wire);

// Stateless decrypt for the dissector; nullopt on failure.
std::optional<Bytes> esp_decrypt(EncrAlg suite, const DirectionalKey& key, ByteView wire);

}  // namespace witchstack::ike
