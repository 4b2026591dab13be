#include "witchstack/ike/tunnel.hpp"

#include "witchstack/common/error.hpp"
#include "witchstack/crypto/crypto.hpp"

namespace witchstack::ike {

void ReplayWindow::check(std::uint64_t seq) const {
  if (seq == 0) throw Error(Errc::StaleSequence, "sequence 0");
  if (seq > highest_) return;
  std::uint64_t age = highest_ - seq;
  if (age >= kSize)
    throw Error(Errc::StaleSequence,
                std::to_string(seq) + " behind window at " + std::to_string(highest_));
  if ((bitmap_ >> age) & 1) throw Error(Errc::ReplayDetected, std::to_string(seq));
}

void ReplayWindow::mark(std::uint64_t seq) {
  if (seq > highest_) {
    std::uint64_t shift = seq - highest_;
    bitmap_ = shift >= kSize ? 0 : bitmap_ << shift;
    bitmap_ |= 1;
    highest_ = seq;
  } else {
    bitmap_ |= std::uint64_t{1} << (highest_ - seq);
  }
}

namespace {

Bytes esp_nonce(const DirectionalKey& k, ByteView seq) {
  Bytes n = k.salt;
  append(n, seq);
  return n;
}

}  // namespace

Bytes tunnel_seal(TunnelSession& session, ByteView inner_packet) {
  if (session.send_seq == kMaxSequence) throw Error(Errc::SequenceExhausted);
  ByteWriter w;
  w.u64(session.send_seq);
  Bytes out = w.take();
  Bytes sealed = crypto::aead_seal(aead_for(session.cipher_suite), session.send.key,
                                   esp_nonce(session.send, out), out, inner_packet);
  append(out, sealed);
  ++session.send_seq;
  return out;
}

std::optional<Bytes> esp_decrypt(EncrAlg suite, const DirectionalKey& key, ByteView wire) {
  if (wire.size() < kEspSeqSize + crypto::kAeadTagSize) return std::nullopt;
  ByteView seq = wire.subspan(0, kEspSeqSize);
  return crypto::aead_open(aead_for(suite), key.key, esp_nonce(key, seq), seq,
                           wire.subspan(kEspSeqSize));
}

Bytes tunnel_open(TunnelSession& session, ByteView wire) {
  if (wire.size() < kEspSeqSize + crypto::kAeadTagSize)
    throw Error(Errc::AuthTagMismatch, "short esp packet");
  ByteReader r(wire);
  std::uint64_t seq = r.u64();
  session.replay_window.check(seq);
  auto plain = esp_decrypt(session.cipher_suite, session.recv, wire);
  if (!plain) throw Error(Errc::AuthTagMismatch, "esp seq " + std::to_string(seq));
  session.replay_window.mark(seq);
  return std::move(*plain);
}

}  // namespace witchstack::ike
