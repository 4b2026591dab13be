#include "witchstack/harness/phone.hpp"

#include <json.hpp>

#include "witchstack/common/error.hpp"
#include "witchstack/shoes/codec.hpp"

namespace witchstack::harness {

using ike::ProtectionClass;
using nlohmann::json;
using namespace std::chrono_literals;

std::vector<alloy::ChannelDescriptor> default_channels() {
  return {alloy::make_descriptor('C', alloy::Urgency::Default),
          alloy::make_descriptor('C', alloy::Urgency::Urgent),
          alloy::make_descriptor('D', alloy::Urgency::Default)};
}

std::string health_channel_name() { return alloy::channel_name('C', alloy::Urgency::Default); }

struct PhoneEndpoint::Connection {
  std::shared_ptr<LinkEngine> engine;
  std::unique_ptr<alloy::ControlSession> control;
  alloy::NwscAcceptor nwsc;
  AlloyHub hub;
  std::mutex mu;
  std::vector<std::thread> threads;
  std::string peer_name;

  explicit Connection(std::shared_ptr<alloy::AlloyTranscript> t) : hub(std::move(t)) {}

  void spawn(std::function<void()> f) {
    std::lock_guard lk(mu);
    threads.emplace_back(std::move(f));
  }

  void shutdown() {
    if (engine) engine->stop();
    std::unique_ptr<alloy::ControlSession> ctl;
    {
      std::lock_guard lk(mu);
      ctl = std::move(control);
    }
    if (ctl) ctl->stop();
    std::vector<std::thread> ts;
    {
      std::lock_guard lk(mu);
      ts.swap(threads);
    }
    for (auto& t : ts)
      if (t.joinable()) t.join();
    hub.close_all();
  }
};

PhoneEndpoint::PhoneEndpoint(Identity id, PhoneOptions opt) : id_(std::move(id)), opt_(std::move(opt)) {
  if (id_.role != Role::Phone) throw Error(Errc::BadIdentityFile, "identity is not a phone");
  opt_.engine.initiator = false;
  log_ = opt_.engine.log ? opt_.engine.log : std::make_shared<SecurityLog>();
  opt_.engine.log = log_;
  store_ = opt_.store ? opt_.store : std::make_shared<nanosync::HealthStore>();
  health_ = std::make_unique<HealthSyncServer>(store_, id_.aoverc, opt_.health_mode, log_);
  if (!opt_.firewall_file.empty()) {
    try {
      firewall_.load_file(opt_.firewall_file);
    } catch (const Error&) {
    }
  }
  proxy_ = std::make_unique<shoes::ShoesProxy>(
      firewall_, counters_, network_, opt_.dialer ? opt_.dialer : shoes::ShoesProxy::tcp_dialer());
  proxy_->set_observer([this](const shoes::ProxyOutcome& o) {
    json j{{"host", o.host},
           {"process", o.process},
           {"code", o.reply.code},
           {"domain", o.reply.domain},
           {"bytes_up", o.bytes_up},
           {"bytes_down", o.bytes_down}};
    if (o.error) j["error"] = std::string(errc_name(*o.error));
    feed_.publish("connection", j.dump());
  });
  log_->subscribe([this](const SecurityEvent& e) {
    feed_.publish("security", json{{"kind", std::string(security_event_name(e.kind))},
                                   {"detail", e.detail},
                                   {"timestamp_us", e.timestamp_us}}
                                  .dump());
  });
  health_->set_on_applied([this](const nanosync::ChangeSet& cs, const nanosync::ApplyResult& r) {
    std::size_t inserts = 0, deletes = 0;
    for (const auto& c : cs.changes) {
      inserts += c.inserts.size();
      deletes += c.deletes.size();
    }
    feed_.publish("samples", json{{"changes", r.applied},
                                  {"inserts", inserts},
                                  {"deletes", deletes},
                                  {"duplicates", r.duplicates},
                                  {"held_back", r.held_back}}
                                 .dump());
  });
  listener_ = net::TcpListener::bind(opt_.host, opt_.port);
  listener_port_ = listener_.port();
}

PhoneEndpoint::~PhoneEndpoint() { stop(); }

void PhoneEndpoint::start() {
  if (started_.exchange(true)) return;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void PhoneEndpoint::stop() {
  if (stopping_.exchange(true)) return;
  listener_.close();
  if (acceptor_.joinable()) acceptor_.join();
  std::list<std::shared_ptr<Connection>> conns;
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(mu_);
    conns = connections_;
    threads.swap(threads_);
  }
  for (auto& c : conns)
    if (c->engine) c->engine->stop();
  for (auto& t : threads)
    if (t.joinable()) t.join();
  for (auto& c : conns) c->shutdown();
  proxy_->join_all();
  cv_.notify_all();
}

void PhoneEndpoint::accept_loop() {
  while (!stopping_) {
    auto s = listener_.accept(200ms);
    if (!s) continue;
    std::lock_guard lk(mu_);
    if (stopping_) break;
    threads_.emplace_back([this, st = std::make_shared<net::TcpStream>(std::move(*s))]() mutable {
      serve(std::move(*st));
    });
  }
}

void PhoneEndpoint::serve(net::TcpStream stream) {
  auto link = std::make_unique<link::VirtualLink>(std::move(stream), link::Direction::ToWatch, opt_.transcript);
  try {
    link::serve_service_channel(*link, {opt_.service});
  } catch (const Error&) {
    return;
  }
  auto conn = std::make_shared<Connection>(opt_.alloy_transcript);
  conn->peer_name = id_.peer_name;
  conn->engine = std::make_shared<LinkEngine>(std::move(link), id_.device, id_.peer, opt_.engine);
  conn->engine->set_on_effect([this](ProtectionClass c, const ike::NotifyEffect& e) {
    json j{{"class", std::string(1, static_cast<char>(c))},
           {"effect", std::string(ike::effect_name(e.kind))},
           {"detail", e.detail}};
    feed_.publish("tunnel", j.dump());
  });
  wire(conn);
  {
    std::lock_guard lk(mu_);
    if (stopping_) return;
    connections_.push_back(conn);
  }
  conn->engine->start();
  conn->engine->wait_established(opt_.engine.handshake_timeout * 2);
  cv_.notify_all();
  feed_.publish("link", json{{"state", "up"}, {"peer", conn->peer_name}}.dump());
}

void PhoneEndpoint::wire(const std::shared_ptr<Connection>& c) {
  Connection* conn = c.get();
  conn->hub.topics()->add(kHealthTopic, [this, conn](const alloy::Delivery& d) {
    auto reply = health_->handle(d.payload);
    if (!reply) return;
    auto ch = conn->hub.find(d.channel);
    if (!ch) return;
    alloy::SendOptions o;
    o.response_to = d.message.message_uuid;
    try {
      ch->send_on_topic(kHealthTopic, *reply, o);
    } catch (const Error&) {
    }
  });

  conn->engine->listen(ProtectionClass::C, alloy::kControlPort, [this, conn](StreamPtr s) {
    conn->spawn([this, conn, s] {
      alloy::ControlOptions o;
      o.role = alloy::Role::Phone;
      o.hello.device_id = id_.device.device_name;
      o.channels = default_channels();
      std::unique_ptr<alloy::ControlSession> ctl;
      try {
        ctl = alloy::ControlSession::connect(s, o);
      } catch (const Error&) {
        s->close();
        return;
      }
      for (const auto& d : ctl->local_channels()) conn->nwsc.announce(d);
      for (const auto& d : ctl->remote_channels()) conn->nwsc.announce(d);
      ctl->set_on_setup([conn](const alloy::ChannelDescriptor& d) { conn->nwsc.announce(d); });
      ctl->set_on_close([conn](const Uuid& u) { conn->nwsc.release(u); });
      ctl->start();
      std::lock_guard lk(conn->mu);
      conn->control = std::move(ctl);
    });
  });

  auto data_acceptor = [this, conn](StreamPtr s) {
    conn->spawn([this, conn, s] {
      try {
        auto d = conn->nwsc.accept(*s);
        conn->hub.add(d, s);
        cv_.notify_all();
        feed_.publish("channel", json{{"name", d.name}, {"state", "open"}}.dump());
      } catch (const Error&) {
        s->close();
      }
    });
  };
  conn->engine->listen(ProtectionClass::C, alloy::kDataPort, data_acceptor);
  conn->engine->listen(ProtectionClass::D, alloy::kDataPort, data_acceptor);
  conn->engine->listen(ProtectionClass::D, shoes::kShoesPort, [this](StreamPtr s) { proxy_->spawn(s); });
}

bool PhoneEndpoint::wait_ready(std::chrono::milliseconds timeout) const { return wait_channels(1, timeout); }

bool PhoneEndpoint::wait_channels(std::size_t n, std::chrono::milliseconds timeout) const {
  std::unique_lock lk(mu_);
  return cv_.wait_for(lk, timeout, [&] {
    if (connections_.empty()) return false;
    const auto& c = connections_.back();
    return c->engine->established(ProtectionClass::C) && c->engine->established(ProtectionClass::D) &&
           c->hub.names().size() >= n;
  });
}

void PhoneEndpoint::set_strict(bool strict) {
  opt_.engine.strict_notify = strict;
  std::lock_guard lk(mu_);
  for (auto& c : connections_) c->engine->set_strict(strict);
}

void PhoneEndpoint::set_health_mode(aoverc::Mode m) {
  opt_.health_mode = m;
  health_->set_mode(m);
}

void PhoneEndpoint::firewall_changed() {
  if (!opt_.firewall_file.empty()) firewall_.save_file(opt_.firewall_file);
  feed_.publish("firewall", firewall_.to_json());
}

PhoneStatus PhoneEndpoint::status() const {
  PhoneStatus st;
  st.strict = opt_.engine.strict_notify;
  st.health_mode = health_->mode() == aoverc::Mode::Faithful ? "faithful" : "aead";
  st.link_port = listener_port_;
  std::shared_ptr<Connection> c;
  {
    std::lock_guard lk(mu_);
    st.connections = connections_.size();
    if (!connections_.empty()) c = connections_.back();
  }
  if (!c) return st;
  st.peer_name = c->peer_name;
  st.channels = c->hub.names();
  auto stats = c->engine->stats();
  for (auto cls : {ProtectionClass::C, ProtectionClass::D}) {
    TunnelStatus t;
    t.protection_class = static_cast<char>(cls);
    t.established = c->engine->established(cls);
    t.strict = st.strict;
    if (auto hs = c->engine->handshake(cls))
      t.suite = hs->suite.encryption == ike::EncrAlg::AesGcm16_256 ? "AES-GCM-256" : "ChaCha20-Poly1305";
    if (auto ns = c->engine->notify_state(cls); ns && ns->peer_wifi) t.peer_wifi = ns->peer_wifi->to_string();
    t.esp_in = stats.esp_in;
    t.esp_out = stats.esp_out;
    st.tunnels.push_back(t);
  }
  return st;
}

std::shared_ptr<LinkEngine> PhoneEndpoint::engine() const {
  std::lock_guard lk(mu_);
  if (connections_.empty()) return nullptr;
  return connections_.back()->engine;
}

}  // namespace witchstack::harness
