#include "witchstack/harness/watch.hpp"

#include <thread>

#include "witchstack/alloy/nwsc.hpp"
#include "witchstack/common/error.hpp"

namespace witchstack::harness {

using ike::ProtectionClass;
using namespace std::chrono_literals;

WatchEmulator::WatchEmulator(Identity id, WatchOptions opt) : id_(std::move(id)), opt_(std::move(opt)) {
  if (id_.role != Role::Watch) throw Error(Errc::BadIdentityFile, "identity is not a watch");
  opt_.engine.initiator = true;
  store_ = std::make_shared<nanosync::HealthStore>();
  health_ = std::make_unique<HealthSyncClient>(store_, id_.aoverc, opt_.health_mode);
}

WatchEmulator::~WatchEmulator() { disconnect(); }

void WatchEmulator::connect() {
  std::optional<net::TcpStream> tcp;
  std::string last;
  auto wait = opt_.backoff;
  for (int i = 0; i < std::max(1, opt_.connect_attempts); ++i) {
    if (i > 0) {
      std::this_thread::sleep_for(wait);
      wait *= 2;
    }
    try {
      tcp = net::TcpStream::connect(opt_.host, opt_.port);
      break;
    } catch (const Error& e) {
      last = e.what();
    }
  }
  if (!tcp) throw Error(Errc::ConnectFailure, last);
  auto link = std::make_unique<link::VirtualLink>(std::move(*tcp), link::Direction::ToPhone, opt_.transcript);
  try {
    link::negotiate_service_channel(*link, opt_.service);
  } catch (const Error& e) {
    throw Error(Errc::ConnectFailure, e.what());
  }
  engine_ = std::make_unique<LinkEngine>(std::move(link), id_.device, id_.peer, opt_.engine);
  engine_->start();
  engine_->establish();

  hub_ = std::make_unique<AlloyHub>(opt_.alloy_transcript);
  hub_->topics()->add(kHealthTopic, [this](const alloy::Delivery& d) {
    {
      std::lock_guard lk(reply_mu_);
      replies_.push_back(d);
    }
    reply_cv_.notify_all();
  });
  alloy::ControlOptions o;
  o.role = alloy::Role::Watch;
  o.hello.device_id = id_.device.device_name;
  o.channels = default_channels();
  try {
    control_ = alloy::ControlSession::connect(engine_->open(ProtectionClass::C, alloy::kControlPort), o);
  } catch (const Error& e) {
    throw Error(Errc::HandshakeFailure, std::string("alloy control: ") + e.what());
  }
  control_->start();
  for (const auto& d : control_->channels_to_open()) open_channel(d);
}

void WatchEmulator::open_channel(const alloy::ChannelDescriptor& d) {
  auto cls = d.protection_class == 'D' ? ProtectionClass::D : ProtectionClass::C;
  for (int attempt = 0; attempt < 40; ++attempt) {
    auto s = engine_->open(cls, d.tcp_port);
    try {
      alloy::nwsc_open(*s, d);
      hub_->add(d, s);
      return;
    } catch (const Error& e) {
      s->close();
      if (e.code() != Errc::UnknownChannel) throw;
    }
    std::this_thread::sleep_for(25ms);
  }
  throw Error(Errc::UnknownChannel, d.name);
}

void WatchEmulator::disconnect() {
  if (engine_) engine_->stop();
  if (control_) control_->stop();
  if (hub_) hub_->close_all();
  control_.reset();
  hub_.reset();
  engine_.reset();
}

std::optional<Bytes> WatchEmulator::exchange(Bytes record) {
  auto ch = hub_ ? hub_->find(health_channel_name()) : nullptr;
  if (!ch) throw Error(Errc::SessionDown, "no health channel");
  alloy::SendOptions o;
  o.expects_response = true;
  std::string uuid = ch->send_on_topic(kHealthTopic, record, o);
  std::unique_lock lk(reply_mu_);
  auto deadline = std::chrono::steady_clock::now() + opt_.reply_timeout;
  for (;;) {
    while (!replies_.empty()) {
      auto d = std::move(replies_.front());
      replies_.pop_front();
      if (d.message.response_identifier == uuid) return d.payload;
    }
    if (reply_cv_.wait_until(lk, deadline) == std::cv_status::timeout && replies_.empty())
      return std::nullopt;
  }
}

bool WatchEmulator::sync_health() {
  return health_->sync([this](Bytes r) { return exchange(std::move(r)); });
}

ShoesFetch WatchEmulator::shoes_fetch(const shoes::ShoesRequest& request, ByteView upload,
                                      std::chrono::milliseconds timeout) {
  auto s = engine_->open(ProtectionClass::D, shoes::kShoesPort);
  s->write(shoes::shoes_encode_request(request));
  auto raw = s->read_exact(shoes::kReplySize, timeout);
  if (!raw) throw Error(Errc::Io, "shoes reply missing");
  ShoesFetch out{shoes::shoes_decode_reply(*raw), {}};
  if (out.reply.domain != shoes::domain::kSuccess) {
    s->close();
    return out;
  }
  if (!upload.empty()) s->write(upload);
  s->shutdown_write();
  for (;;) {
    Bytes b = s->read_some(65536, timeout);
    if (b.empty()) break;
    append(out.received, b);
  }
  s->close();
  return out;
}

}  // namespace witchstack::harness
