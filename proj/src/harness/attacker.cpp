#include "witchstack/harness/attacker.hpp"

#include "witchstack/common/error.hpp"
#include "witchstack/link/magnet.hpp"

namespace witchstack::harness {

using namespace std::chrono_literals;

struct LinkAttacker::Splice {
  net::TcpStream watch;
  net::TcpStream phone;
  std::atomic<bool> negotiated{false};
};

LinkAttacker::LinkAttacker(std::string phone_host, std::uint16_t phone_port)
    : phone_host_(std::move(phone_host)),
      phone_port_(phone_port),
      listener_(net::TcpListener::bind("127.0.0.1", 0)),
      sink_(net::UdpSocket::bind("127.0.0.1", 0)) {}

LinkAttacker::~LinkAttacker() { stop(); }

void LinkAttacker::start() {
  acceptor_ = std::thread([this] { accept_loop(); });
  sink_thread_ = std::thread([this] {
    while (!stopping_) {
      auto d = sink_.receive(200ms);
      if (!d) continue;
      std::lock_guard lk(sink_mu_);
      sink_payloads_.push_back(std::move(d->data));
      ++sink_count_;
    }
  });
}

void LinkAttacker::stop() {
  if (stopping_.exchange(true)) return;
  listener_.close();
  sink_.close();
  if (acceptor_.joinable()) acceptor_.join();
  if (sink_thread_.joinable()) sink_thread_.join();
  {
    std::lock_guard lk(splices_mu_);
    for (auto& sp : splices_) {
      sp->watch.shutdown();
      sp->phone.shutdown();
    }
  }
  for (auto& t : threads_)
    if (t.joinable()) t.join();
}

void LinkAttacker::set_hook(Hook h) {
  std::lock_guard lk(hook_mu_);
  hook_ = std::move(h);
}

std::vector<Bytes> LinkAttacker::sink_payloads() const {
  std::lock_guard lk(sink_mu_);
  return sink_payloads_;
}

void LinkAttacker::accept_loop() {
  while (!stopping_) {
    auto w = listener_.accept(200ms);
    if (!w) continue;
    auto sp = std::make_shared<Splice>();
    sp->watch = std::move(*w);
    try {
      sp->phone = net::TcpStream::connect(phone_host_, phone_port_);
    } catch (const Error&) {
      continue;
    }
    {
      std::lock_guard lk(splices_mu_);
      splices_.push_back(sp);
    }
    threads_.emplace_back([this, sp] { pump(sp, link::Direction::ToPhone); });
    threads_.emplace_back([this, sp] { pump(sp, link::Direction::ToWatch); });
  }
}

void LinkAttacker::pump(std::shared_ptr<Splice> sp, link::Direction dir) {
  net::TcpStream& in = dir == link::Direction::ToPhone ? sp->watch : sp->phone;
  net::TcpStream& out = dir == link::Direction::ToPhone ? sp->phone : sp->watch;
  link::NrlpStreamDecoder decoder;
  auto forward = [&](std::uint8_t seq, std::uint8_t ack, ByteView data) {
    ByteWriter w(data.size() + 4);
    w.u16(static_cast<std::uint16_t>(data.size() + 2)).u8(seq).u8(ack).raw(data);
    out.write_all(w.bytes());
    ++relayed_;
  };
  try {
    for (;;) {
      auto len = in.read_exact(2);
      if (!len) break;
      std::size_t n = static_cast<std::size_t>((*len)[0]) << 8 | (*len)[1];
      if (n < 2) break;
      auto body = in.read_exact(n, 5s);
      if (!body) break;
      std::uint8_t seq = (*body)[0], ack = (*body)[1];
      ByteView data = ByteView(*body).subspan(2);
      if (!sp->negotiated) {
        if (dir == link::Direction::ToWatch && !data.empty() &&
            data[0] == static_cast<std::uint8_t>(link::MagnetOpcode::AcceptChannel))
          sp->negotiated = true;
        forward(seq, ack, data);
        continue;
      }
      decoder.feed(data);
      while (auto frame = decoder.next()) {
        Hook h;
        {
          std::lock_guard lk(hook_mu_);
          h = hook_;
        }
        std::optional<std::vector<link::NrlpFrame>> replaced;
        if (h) replaced = h(dir, *frame);
        if (!replaced) {
          forward(seq, ack, link::nrlp_encode(*frame));
          continue;
        }
        ++altered_;
        for (const auto& f : *replaced) forward(seq, ack, link::nrlp_encode(f));
      }
    }
  } catch (const Error&) {
  }
  out.shutdown_write();
}

}  // namespace witchstack::harness
