#include "witchstack/harness/engine.hpp"

#include <deque>

#include "witchstack/common/error.hpp"

namespace witchstack::harness {

using ike::ProtectionClass;
using namespace std::chrono_literals;

std::uint8_t esp_frame_type(ProtectionClass c) noexcept {
  return static_cast<std::uint8_t>(c == ProtectionClass::C ? link::NrlpType::EspClassC
                                                           : link::NrlpType::Esp);
}

class LinkEngine::Mailbox : public ike::IkeTransport {
 public:
  explicit Mailbox(std::function<void(Bytes)> send) : send_(std::move(send)) {}

  void send(Bytes message) override { send_(std::move(message)); }

  Bytes receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lk(mu_);
    if (!cv_.wait_for(lk, timeout, [&] { return !q_.empty() || closed_; }) || q_.empty())
      throw Error(Errc::Timeout, "ike handshake");
    Bytes m = std::move(q_.front());
    q_.pop_front();
    return m;
  }

  void push(Bytes m) {
    {
      std::lock_guard lk(mu_);
      q_.push_back(std::move(m));
    }
    cv_.notify_all();
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::function<void(Bytes)> send_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Bytes> q_;
  bool closed_ = false;
};

LinkEngine::LinkEngine(std::unique_ptr<link::VirtualLink> link, ike::DeviceIdentity identity,
                       ike::PeerKeys peer, EngineOptions opt)
    : link_(std::move(link)),
      identity_(std::move(identity)),
      peer_(std::move(peer)),
      opt_(std::move(opt)) {
  if (opt_.local_wifi) udp_ = net::UdpSocket::bind(opt_.local_wifi->host(), opt_.local_wifi->port);
  else if (opt_.wifi_routing) udp_ = net::UdpSocket::bind("127.0.0.1", 0);
}

LinkEngine::~LinkEngine() { stop(); }

void LinkEngine::start() {
  if (started_.exchange(true)) return;
  reader_ = std::thread([this] { read_loop(); });
  if (opt_.local_wifi) udp_reader_ = std::thread([this] { udp_loop(); });
  if (opt_.run_keepalive) keepalive_ = std::thread([this] { keepalive_loop(); });
}

void LinkEngine::stop() {
  if (stopping_.exchange(true)) return;
  link_->close();
  udp_.close();
  {
    std::lock_guard lk(hs_mu_);
    for (auto& [spi, mb] : pending_) mb->close();
    if (initiating_) initiating_->close();
  }
  state_cv_.notify_all();
  if (reader_.joinable()) reader_.join();
  if (udp_reader_.joinable()) udp_reader_.join();
  if (keepalive_.joinable()) keepalive_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(hs_mu_);
    threads.swap(hs_threads_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
  for (auto c : {ProtectionClass::C, ProtectionClass::D}) {
    std::shared_ptr<InnerMux> mux;
    {
      std::lock_guard lk(slot(c).mu);
      mux = std::move(slot(c).mux);
    }
    if (mux) mux->shutdown();
  }
}

void LinkEngine::send_link(std::uint8_t type, Bytes payload) {
  std::lock_guard lk(link_send_mu_);
  link_->send_nrlp(link::make_nrlp_frame(type, std::move(payload)));
}

void LinkEngine::transmit_locked(Slot& s, std::uint8_t type, Bytes payload) {
  if (opt_.wifi_routing && s.session && s.session->state().peer_wifi) {
    const auto& to = *s.session->state().peer_wifi;
    udp_.send_to(link::nrlp_encode(link::make_nrlp_frame(type, std::move(payload))), to.host(),
                 to.port);
    ++wifi_out_;
    return;
  }
  send_link(type, std::move(payload));
}

void LinkEngine::read_loop() {
  link::NrlpStreamDecoder decoder;
  while (!stopping_) {
    std::optional<Bytes> data;
    try {
      data = link_->receive();
    } catch (const Error&) {
      continue;
    }
    if (!data) break;
    decoder.feed(*data);
    while (auto frame = decoder.next()) {
      try {
        dispatch(*frame);
      } catch (const Error&) {
      }
    }
  }
  {
    std::lock_guard lk(state_mu_);
    link_gone_ = true;
  }
  state_cv_.notify_all();
  for (auto c : {ProtectionClass::C, ProtectionClass::D}) {
    std::shared_ptr<InnerMux> mux;
    {
      std::lock_guard lk(slot(c).mu);
      mux = slot(c).mux;
    }
    if (mux) mux->shutdown();
  }
}

void LinkEngine::udp_loop() {
  while (!stopping_) {
    auto d = udp_.receive(200ms);
    if (!d) continue;
    ++wifi_in_;
    try {
      auto frame = link::nrlp_decode(d->data);
      dispatch(frame.frame);
    } catch (const Error&) {
    }
  }
}

void LinkEngine::keepalive_loop() {
  std::unique_lock lk(state_mu_);
  while (!stopping_ && !link_gone_) {
    if (state_cv_.wait_for(lk, opt_.keepalive.interval, [&] { return stopping_ || link_gone_; }))
      break;
    lk.unlock();
    for (auto c : {ProtectionClass::C, ProtectionClass::D})
      if (established(c)) keepalive_now(c);
    lk.lock();
  }
}

void LinkEngine::dispatch(const link::NrlpFrame& frame) {
  switch (static_cast<link::NrlpType>(frame.type)) {
    case link::NrlpType::IkeV2: handle_ike(frame.payload); break;
    case link::NrlpType::EspClassC: handle_esp(ProtectionClass::C, frame.payload); break;
    case link::NrlpType::Esp: handle_esp(ProtectionClass::D, frame.payload); break;
    case link::NrlpType::Echo:
      if (!frame.payload.empty() && frame.payload[0] == 0x01) {
        auto pong = link::echo_service(frame);
        send_link(pong.type, std::move(pong.payload));
      }
      break;
    default: break;
  }
}

void LinkEngine::handle_ike(const Bytes& wire) {
  ++ike_in_;
  ike::IkeHeader h;
  try {
    h = ike::parse_ike_header(wire);
  } catch (const Error&) {
    return;
  }
  for (auto c : {ProtectionClass::C, ProtectionClass::D}) {
    Slot& s = slot(c);
    std::vector<ike::NotifyEffect> effects;
    {
      std::lock_guard lk(s.mu);
      if (!s.session || !s.session->owns(h.spi_i, h.spi_r)) continue;
      auto in = s.session->handle(wire);
      if (in.reply) transmit_locked(s, static_cast<std::uint8_t>(link::NrlpType::IkeV2), *in.reply);
      effects = std::move(in.effects);
    }
    notify(c, effects);
    return;
  }

  std::lock_guard lk(hs_mu_);
  if (opt_.initiator) {
    if (initiating_) initiating_->push(wire);
    return;
  }
  if (auto it = pending_.find(h.spi_i); it != pending_.end()) {
    it->second->push(wire);
    return;
  }
  bool sa_init_request = h.exchange == static_cast<std::uint8_t>(ike::ExchangeType::SaInit) &&
                         !(h.flags & ike::kFlagResponse) && h.spi_r == 0;
  if (!sa_init_request || stopping_) return;
  auto mb = std::make_shared<Mailbox>(
      [this](Bytes m) { send_link(static_cast<std::uint8_t>(link::NrlpType::IkeV2), std::move(m)); });
  pending_[h.spi_i] = mb;
  std::uint64_t spi = h.spi_i;
  hs_threads_.emplace_back([this, mb, spi, wire] {
    ike::HandshakeOptions o;
    o.profile = opt_.profile;
    o.local_wifi = opt_.local_wifi;
    o.proxy = opt_.proxy;
    o.strict_notify_mode = opt_.strict_notify;
    o.timeout = opt_.handshake_timeout;
    std::optional<ike::HandshakeResult> hs;
    try {
      hs = ike::handshake_respond_to(identity_, peer_, *mb, wire, o);
    } catch (const Error&) {
    }
    {
      std::lock_guard lk2(hs_mu_);
      pending_.erase(spi);
    }
    if (hs && !stopping_) install(std::move(*hs));
  });
}

void LinkEngine::handle_esp(ProtectionClass c, ByteView wire) {
  Slot& s = slot(c);
  Bytes inner;
  std::shared_ptr<InnerMux> mux;
  {
    std::lock_guard lk(s.mu);
    if (!s.session || !s.mux) {
      ++esp_dropped_;
      return;
    }
    try {
      inner = ike::tunnel_open(s.session->tunnel(), wire);
    } catch (const Error& e) {
      ++esp_dropped_;
      if (opt_.log) {
        if (e.code() == Errc::ReplayDetected)
          opt_.log->record(SecurityEventKind::ReplayDetected,
                           std::string("esp class ") + static_cast<char>(c) + ": " + e.what());
        else if (e.code() == Errc::AuthTagMismatch)
          opt_.log->record(SecurityEventKind::TamperDetected,
                           std::string("esp class ") + static_cast<char>(c) + ": " + e.what());
      }
      return;
    }
    mux = s.mux;
  }
  ++esp_in_;
  mux->deliver(inner);
}

void LinkEngine::install(ike::HandshakeResult hs) {
  ProtectionClass c = hs.protection_class;
  if (opt_.keylog) opt_.keylog->add(KeyLogEntry::of(hs));
  auto session = std::make_unique<ike::IkeSession>(std::move(hs), opt_.log.get(), opt_.keepalive);
  session->set_strict(opt_.strict_notify);
  Slot& s = slot(c);
  auto mux = std::make_shared<InnerMux>(
      [this, c](Bytes segment) {
        Slot& sl = slot(c);
        std::lock_guard lk(sl.mu);
        if (!sl.session || sl.session->down()) throw Error(Errc::SessionDown, "tunnel down");
        Bytes wire = ike::tunnel_seal(sl.session->tunnel(), segment);
        ++esp_out_;
        transmit_locked(sl, esp_frame_type(c), std::move(wire));
      },
      opt_.initiator);
  {
    std::lock_guard lk(listen_mu_);
    for (auto& [port, acceptor] : c == ProtectionClass::C ? listeners_c_ : listeners_d_)
      mux->listen(port, acceptor);
  }
  std::shared_ptr<InnerMux> old;
  {
    std::lock_guard lk(s.mu);
    old = std::move(s.mux);
    s.session = std::move(session);
    s.mux = std::move(mux);
  }
  if (old) old->shutdown();
  {
    std::lock_guard lk(state_mu_);
  }
  state_cv_.notify_all();
}

void LinkEngine::establish() {
  if (!opt_.initiator) throw Error(Errc::HandshakeFailure, "responder cannot initiate");
  for (auto c : {ProtectionClass::C, ProtectionClass::D}) {
    auto mb = std::make_shared<Mailbox>(
        [this](Bytes m) { send_link(static_cast<std::uint8_t>(link::NrlpType::IkeV2), std::move(m)); });
    {
      std::lock_guard lk(hs_mu_);
      initiating_ = mb;
    }
    ike::HandshakeOptions o;
    o.profile = opt_.profile;
    o.local_wifi = opt_.local_wifi;
    o.prelude = opt_.prelude;
    o.strict_notify_mode = opt_.strict_notify;
    o.timeout = opt_.handshake_timeout;
    std::optional<ike::HandshakeResult> hs;
    std::string failure;
    try {
      hs = ike::handshake_initiate(identity_, peer_, c, *mb, o);
    } catch (const Error& e) {
      failure = e.what();
    }
    {
      std::lock_guard lk(hs_mu_);
      initiating_.reset();
    }
    if (!hs)
      throw Error(Errc::HandshakeFailure,
                  std::string("class ") + static_cast<char>(c) + ": " + failure);
    install(std::move(*hs));
  }
}

bool LinkEngine::established(ProtectionClass c) const {
  const Slot& s = slot(c);
  std::lock_guard lk(s.mu);
  return s.session && !s.session->down();
}

bool LinkEngine::wait_established(std::chrono::milliseconds timeout) const {
  std::unique_lock lk(state_mu_);
  return state_cv_.wait_for(lk, timeout, [&] {
    return established(ProtectionClass::C) && established(ProtectionClass::D);
  });
}

bool LinkEngine::wait_closed(std::chrono::milliseconds timeout) const {
  std::unique_lock lk(state_mu_);
  return state_cv_.wait_for(lk, timeout, [&] { return link_gone_; });
}

void LinkEngine::listen(ProtectionClass c, std::uint16_t port, InnerMux::Acceptor on_accept) {
  {
    std::lock_guard lk(listen_mu_);
    (c == ProtectionClass::C ? listeners_c_ : listeners_d_)[port] = on_accept;
  }
  std::shared_ptr<InnerMux> mux;
  {
    std::lock_guard lk(slot(c).mu);
    mux = slot(c).mux;
  }
  if (mux) mux->listen(port, std::move(on_accept));
}

StreamPtr LinkEngine::open(ProtectionClass c, std::uint16_t port) {
  std::shared_ptr<InnerMux> mux;
  {
    std::lock_guard lk(slot(c).mu);
    if (!slot(c).session || slot(c).session->down()) throw Error(Errc::SessionDown, "no tunnel");
    mux = slot(c).mux;
  }
  return mux->open(port);
}

bool LinkEngine::keepalive_now(ProtectionClass c) {
  Slot& s = slot(c);
  bool went_down = false;
  {
    std::lock_guard lk(s.mu);
    if (!s.session || s.session->down()) return false;
    try {
      Bytes req = s.session->keepalive_tick();
      transmit_locked(s, static_cast<std::uint8_t>(link::NrlpType::IkeV2), std::move(req));
    } catch (const Error& e) {
      if (e.code() != Errc::PeerUnresponsive) return true;
      went_down = true;
    }
  }
  if (went_down) {
    session_down(c);
    return false;
  }
  return true;
}

void LinkEngine::session_down(ProtectionClass c) {
  std::shared_ptr<InnerMux> mux;
  std::vector<ike::NotifyEffect> effects;
  {
    std::lock_guard lk(slot(c).mu);
    mux = std::move(slot(c).mux);
    if (slot(c).session)
      while (auto e = slot(c).session->effects().try_pop())
        if (e->kind == ike::EffectKind::SessionDown) effects.push_back(*e);
  }
  if (mux) mux->shutdown();
  notify(c, effects);
  state_cv_.notify_all();
}

void LinkEngine::set_strict(bool strict) {
  opt_.strict_notify = strict;
  for (auto c : {ProtectionClass::C, ProtectionClass::D}) {
    std::lock_guard lk(slot(c).mu);
    if (slot(c).session) slot(c).session->set_strict(strict);
  }
}

void LinkEngine::set_on_effect(EffectObserver f) {
  std::lock_guard lk(observer_mu_);
  on_effect_ = std::move(f);
}

void LinkEngine::notify(ProtectionClass c, const std::vector<ike::NotifyEffect>& effects) {
  if (effects.empty()) return;
  EffectObserver f;
  {
    std::lock_guard lk(observer_mu_);
    f = on_effect_;
  }
  if (f)
    for (const auto& e : effects) f(c, e);
}

Bytes LinkEngine::state_hash(ProtectionClass c) const {
  std::lock_guard lk(slot(c).mu);
  if (!slot(c).session) return {};
  return slot(c).session->state_hash();
}

std::optional<ike::NotifyState> LinkEngine::notify_state(ProtectionClass c) const {
  std::lock_guard lk(slot(c).mu);
  if (!slot(c).session) return std::nullopt;
  return slot(c).session->state();
}

std::optional<ike::HandshakeResult> LinkEngine::handshake(ProtectionClass c) const {
  std::lock_guard lk(slot(c).mu);
  if (!slot(c).session) return std::nullopt;
  return slot(c).session->handshake();
}

EngineStats LinkEngine::stats() const {
  return {esp_in_, esp_out_, esp_dropped_, ike_in_, wifi_out_, wifi_in_};
}

}  // namespace witchstack::harness
