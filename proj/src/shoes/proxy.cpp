#include "witchstack/shoes/proxy.hpp"

namespace witchstack::shoes {

namespace {

constexpr std::size_t kChunk = 16 * 1024;

constexpr std::uint8_t kNetworkBits =
    netflag::kExpensive | netflag::kCellular | netflag::kWifi | netflag::kConstrained;

}  // namespace

bool conditions_satisfied(std::optional<std::uint8_t> condition_flags, std::uint8_t network) {
  if (!condition_flags) return true;
  return ((network & kNetworkBits) & ~*condition_flags) == 0;
}

ShoesProxy::ShoesProxy(Firewall& firewall, TrafficCounters& counters, NetworkState& network,
                       Dialer dialer)
    : firewall_(firewall), counters_(counters), network_(network), dialer_(std::move(dialer)) {}

ShoesProxy::Dialer ShoesProxy::tcp_dialer() {
  return [](const std::string& host, std::uint16_t port) -> StreamPtr {
    return std::make_shared<TcpByteStream>(net::TcpStream::connect(host, port));
  };
}

ProxyOutcome ShoesProxy::deny(ProxyOutcome out, std::uint8_t c, Errc err, ByteStream& client) {
  out.reply = denied_reply(c);
  out.error = err;
  try {
    client.write(shoes_encode_reply(out.reply));
  } catch (const Error&) {
  }
  client.close();
  if (observer_) observer_(out);
  return out;
}

void ShoesProxy::splice(ByteStream& client, ByteStream& dest, ProxyOutcome& out,
                        const TrafficKey& key) {
  std::atomic<std::uint64_t> up{0}, down{0};
  auto pump = [&](ByteStream& from, ByteStream& to, std::atomic<std::uint64_t>& total, bool upstream) {
    try {
      for (;;) {
        auto chunk = from.read_some(kChunk);
        if (chunk.empty()) break;
        to.write(chunk);
        total += chunk.size();
        if (upstream) counters_.up(key, chunk.size());
        else counters_.down(key, chunk.size());
      }
      to.shutdown_write();
    } catch (const Error&) {
      from.close();
      to.close();
    }
  };
  std::thread upstream([&] { pump(client, dest, up, true); });
  pump(dest, client, down, false);
  upstream.join();
  client.close();
  dest.close();
  out.bytes_up = up;
  out.bytes_down = down;
}

ProxyOutcome ShoesProxy::handle(StreamPtr client) {
  ProxyOutcome out;
  ShoesRequest req;
  try {
    auto len = client->read_exact(2, request_timeout_);
    if (!len) {
      client->close();
      out.error = Errc::Malformed;
      return out;
    }
    auto n = static_cast<std::size_t>(((*len)[0] << 8) | (*len)[1]);
    Bytes wire = *len;
    if (n > 0) {
      auto body = client->read_exact(n, request_timeout_);
      if (!body) throw Error(Errc::Malformed, "request cut short");
      append(wire, *body);
    }
    req = shoes_decode_request(wire);
  } catch (const Error& e) {
    return deny(std::move(out), code::kUnsupported, e.code(), *client);
  }

  out.request = req;
  out.host = destination_host(req.destination);
  out.process = req.process_name.value_or("");
  TrafficKey key{out.host, out.process};

  if (req.request_type() == RequestType::Bonjour)
    return deny(std::move(out), code::kUnsupported, Errc::UnknownRequestType, *client);

  if (firewall_.evaluate(out.host, req.process_name).action == Action::Block) {
    counters_.blocked(key);
    return deny(std::move(out), code::kFirewall, Errc::FirewallBlocked, *client);
  }
  auto network = network_.flags();
  if (!conditions_satisfied(req.condition_flags, network))
    return deny(std::move(out), code::kConditions, Errc::ConditionUnsatisfied, *client);

  StreamPtr dest;
  try {
    dest = dialer_(out.host, req.port);
  } catch (const Error&) {
    return deny(std::move(out), code::kDialFailure, Errc::DialFailure, *client);
  }
  if (!dest) return deny(std::move(out), code::kDialFailure, Errc::DialFailure, *client);

  counters_.connection(key);
  out.reply = allowed_reply(network);
  try {
    client->write(shoes_encode_reply(out.reply));
  } catch (const Error& e) {
    dest->close();
    out.error = e.code();
    return out;
  }
  splice(*client, *dest, out, key);
  if (observer_) observer_(out);
  return out;
}

void ShoesProxy::spawn(StreamPtr client) {
  std::lock_guard lock(threads_mu_);
  threads_.emplace_back([this, client] { handle(client); });
}

void ShoesProxy::join_all() {
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(threads_mu_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

}  // namespace witchstack::shoes
