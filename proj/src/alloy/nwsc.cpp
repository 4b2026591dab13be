#include "witchstack/alloy/nwsc.hpp"

#include <optional>

#include "witchstack/common/error.hpp"

namespace witchstack::alloy {

Bytes encode_preamble(const NwscPreamble& p) {
  if (p.name.size() > 0xFF) throw Error(Errc::PayloadTooLarge, "nwsc name");
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(p.name.size()));
  w.raw(to_bytes(p.name));
  w.raw(p.channel_uuid);
  return w.take();
}

NwscPreamble decode_preamble(ByteView b) {
  ByteReader r(b, Errc::Malformed);
  NwscPreamble p;
  p.name = r.string(r.u8());
  auto u = r.view(16);
  std::copy(u.begin(), u.end(), p.channel_uuid.begin());
  if (!r.empty()) throw Error(Errc::Malformed, "trailing preamble bytes");
  return p;
}

void nwsc_open(ByteStream& s, const ChannelDescriptor& d, std::chrono::milliseconds timeout) {
  s.write(encode_preamble({d.name, d.channel_uuid}));
  auto answer = s.read_exact(1, timeout);
  if (!answer || (*answer)[0] != kNwscAccept) throw Error(Errc::UnknownChannel, d.name);
}

void NwscAcceptor::announce(const ChannelDescriptor& d) {
  std::lock_guard lk(mu_);
  announced_[d.channel_uuid] = d;
}

void NwscAcceptor::release(const Uuid& channel) {
  std::lock_guard lk(mu_);
  open_.erase(channel);
}

bool NwscAcceptor::is_open(const Uuid& channel) const {
  std::lock_guard lk(mu_);
  return open_.count(channel) > 0;
}

ChannelDescriptor NwscAcceptor::accept(ByteStream& s, std::chrono::milliseconds timeout) {
  auto len = s.read_exact(1, timeout);
  if (!len) throw Error(Errc::UnknownChannel, "no preamble");
  auto rest = s.read_exact(std::size_t{(*len)[0]} + 16, timeout);
  if (!rest) throw Error(Errc::UnknownChannel, "short preamble");
  Bytes raw = *len;
  append(raw, *rest);
  NwscPreamble p = decode_preamble(raw);
  auto reject = [&](Errc code, const std::string& why) {
    s.write(Bytes{kNwscReject});
    s.close();
    throw Error(code, why);
  };
  std::optional<ChannelDescriptor> found;
  bool duplicate = false;
  {
    std::lock_guard lk(mu_);
    auto it = announced_.find(p.channel_uuid);
    if (it != announced_.end() && it->second.name == p.name) {
      duplicate = open_.count(p.channel_uuid) > 0;
      if (!duplicate) {
        open_.insert(p.channel_uuid);
        found = it->second;
      }
    }
  }
  if (duplicate) reject(Errc::DuplicateOpen, p.name);
  if (!found) reject(Errc::UnknownChannel, p.name);
  s.write(Bytes{kNwscAccept});
  return *found;
}

}  // namespace witchstack::alloy
