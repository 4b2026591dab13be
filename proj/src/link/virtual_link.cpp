#include "witchstack/link/virtual_link.hpp"

namespace witchstack::link {

namespace {
Direction opposite(Direction d) {
  return d == Direction::ToWatch ? Direction::ToPhone : Direction::ToWatch;
}
}  // namespace

VirtualLink::VirtualLink(net::TcpStream stream, Direction outbound,
                         std::shared_ptr<TranscriptWriter> sink)
    : stream_(std::move(stream)), outbound_(outbound), sink_(std::move(sink)) {}

VirtualLink::~VirtualLink() { close(); }

void VirtualLink::send(ByteView data) {
  if (data.size() > kMaxFrameData) throw Error(Errc::PayloadTooLarge, "link frame");
  if (closed_) throw Error(Errc::SessionDown, "link closed");
  std::lock_guard lock(send_mu_);
  ByteWriter w(data.size() + 4);
  w.u16(static_cast<std::uint16_t>(data.size() + 2)).u8(send_seq_++).u8(received_).raw(data);
  const Bytes& wire = w.bytes();
  if (sink_) sink_->write(outbound_, ByteView(wire).subspan(2));
  try {
    stream_.write_all(wire);
  } catch (const Error&) {
    closed_ = true;
    throw Error(Errc::SessionDown, "link write failed");
  }
}

std::optional<Bytes> VirtualLink::receive(std::optional<std::chrono::milliseconds> timeout) {
  if (closed_) return std::nullopt;
  std::optional<Bytes> header;
  try {
    header = stream_.read_exact(2, timeout);
  } catch (const Error& e) {
    if (e.code() == Errc::Timeout) throw;
    closed_ = true;
    return std::nullopt;
  }
  if (!header) {
    closed_ = true;
    return std::nullopt;
  }
  std::size_t len = (std::size_t{(*header)[0]} << 8) | (*header)[1];
  if (len < 2) {
    closed_ = true;
    return std::nullopt;
  }
  std::optional<Bytes> body;
  try {
    body = stream_.read_exact(len, std::chrono::seconds(5));
  } catch (const Error&) {
    body.reset();
  }
  if (!body) {
    closed_ = true;
    return std::nullopt;
  }
  received_.fetch_add(1);
  if (sink_) sink_->write(opposite(outbound_), *body);
  return Bytes(body->begin() + 2, body->end());
}

void VirtualLink::send_nrlp(const NrlpFrame& frame) {
  Bytes wire = nrlp_encode(frame);
  ByteView v(wire);
  for (std::size_t off = 0; off < v.size(); off += max_fragment_)
    send(v.subspan(off, std::min(max_fragment_, v.size() - off)));
}

void VirtualLink::close() noexcept {
  closed_ = true;
  stream_.shutdown();
}

void VirtualLink::register_channel(const std::string& service, std::uint8_t) {
  std::lock_guard lock(channel_mu_);
  channels_.insert(service);
}

bool VirtualLink::has_channel(const std::string& service) const {
  std::lock_guard lock(channel_mu_);
  return channels_.contains(service);
}

ServiceChannel negotiate_service_channel(VirtualLink& link, const std::string& service,
                                         std::chrono::milliseconds timeout) {
  link.send_magnet(encode_channel_request({service}));
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw Error(Errc::Timeout, "magnet negotiation");
    auto data = link.receive(left);
    if (!data) throw Error(Errc::ServiceRejected, "link closed during negotiation");
    MagnetMessage msg;
    try {
      msg = magnet_decode(*data);
    } catch (const Error&) {
      continue;
    }
    if (msg.opcode == static_cast<std::uint8_t>(MagnetOpcode::AcceptChannel)) {
      auto accept = decode_channel_accept(msg);
      if (accept.service != service) continue;
      link.register_channel(service, accept.channel_id);
      return {service, accept.channel_id};
    }
    if (msg.opcode == static_cast<std::uint8_t>(MagnetOpcode::ErrorResponse)) {
      auto err = decode_channel_error(msg);
      throw Error(Errc::ServiceRejected, err.service);
    }
  }
}

ServiceChannel serve_service_channel(VirtualLink& link, const std::set<std::string>& advertised,
                                     std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  std::uint8_t next_id = 1;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw Error(Errc::Timeout, "magnet negotiation");
    auto data = link.receive(left);
    if (!data) throw Error(Errc::ConnectFailure, "link closed during negotiation");
    MagnetMessage msg;
    try {
      msg = magnet_decode(*data);
    } catch (const Error&) {
      continue;
    }
    switch (static_cast<MagnetOpcode>(msg.opcode)) {
      case MagnetOpcode::CreateChannel: {
        auto req = decode_channel_request(msg);
        if (!advertised.contains(req.service)) {
          link.send_magnet(encode_channel_error({kMagnetErrorUnknownService, req.service}));
          continue;
        }
        std::uint8_t id = next_id++;
        link.send_magnet(encode_channel_accept({req.service, id}));
        link.register_channel(req.service, id);
        return {req.service, id};
      }
      case MagnetOpcode::RemoteServices: {
        ByteWriter w;
        for (const auto& s : advertised) w.u8(static_cast<std::uint8_t>(s.size())).raw(s);
        link.send_magnet({static_cast<std::uint8_t>(MagnetOpcode::RemoteServicesResponse),
                          std::move(w).take()});
        continue;
      }
      default:
        continue;
    }
  }
}

}  // namespace witchstack::link
