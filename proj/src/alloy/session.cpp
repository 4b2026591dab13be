#include "witchstack/alloy/session.hpp"

#include <algorithm>

#include "witchstack/alloy/message.hpp"
#include "witchstack/common/error.hpp"

namespace witchstack::alloy {

namespace {
void erase_uuid(std::vector<ChannelDescriptor>& v, const Uuid& u) {
  v.erase(std::remove_if(v.begin(), v.end(), [&](const auto& d) { return d.channel_uuid == u; }), v.end());
}
}  // namespace

std::vector<ChannelDescriptor> merge_channels(const std::vector<ChannelDescriptor>& local,
                                              const std::vector<ChannelDescriptor>& remote) {
  std::vector<ChannelDescriptor> out;
  auto has = [&](const std::string& name) {
    return std::any_of(out.begin(), out.end(), [&](const auto& d) { return d.name == name; });
  };
  for (const auto& d : local)
    if (!has(d.name)) out.push_back(d);
  for (const auto& d : remote)
    if (!has(d.name)) out.push_back(d);
  return out;
}

std::unique_ptr<ControlSession> ControlSession::connect(StreamPtr stream, ControlOptions opt) {
  std::unique_ptr<ControlSession> s(new ControlSession(std::move(stream), std::move(opt)));
  Hello hello = s->opt_.hello;
  hello.setup_count = static_cast<std::uint16_t>(s->opt_.channels.size());
  s->stream_->write(control_encode({static_cast<std::uint8_t>(ControlType::Hello), encode_hello(hello)}));
  for (const auto& d : s->opt_.channels) {
    s->stream_->write(control_encode({static_cast<std::uint8_t>(ControlType::SetupChannel), encode_setup(d)}));
    s->local_.push_back(d);
  }

  auto next = [&]() -> ControlMessage {
    std::optional<Bytes> f;
    try {
      f = read_frame(*s->stream_, s->opt_.hello_timeout);
    } catch (const Error& e) {
      if (e.code() == Errc::Timeout) throw Error(Errc::HelloTimeout);
      throw;
    }
    if (!f) throw Error(Errc::HelloTimeout, "control stream closed");
    return control_decode(*f);
  };

  ControlMessage first = next();
  if (first.msg_type != static_cast<std::uint8_t>(ControlType::Hello))
    throw Error(Errc::HelloTimeout, "expected Hello, got " + std::string(control_type_name(first.msg_type)));
  s->peer_hello_ = decode_hello(first.body);
  if (version_major(s->peer_hello_.version) != version_major(hello.version))
    throw Error(Errc::IncompatibleVersion, s->peer_hello_.version + " vs " + hello.version);
  for (int i = 0; i < s->peer_hello_.setup_count; ++i) {
    ControlMessage m = next();
    if (m.msg_type != static_cast<std::uint8_t>(ControlType::SetupChannel))
      throw Error(Errc::Malformed, "expected SetupChannel");
    s->remote_.push_back(decode_setup(m.body));
  }
  return s;
}

ControlSession::~ControlSession() {
  stop();
  if (reader_.joinable()) reader_.join();
}

void ControlSession::start() { reader_ = std::thread([this] { run(); }); }

void ControlSession::stop() {
  if (stopped_.exchange(true)) return;
  stream_->close();
}

void ControlSession::send_raw(const ControlMessage& m) {
  std::lock_guard lk(send_mu_);
  stream_->write(control_encode(m));
}

void ControlSession::setup_channel(const ChannelDescriptor& d) {
  {
    std::lock_guard lk(mu_);
    local_.push_back(d);
  }
  send_raw({static_cast<std::uint8_t>(ControlType::SetupChannel), encode_setup(d)});
}

void ControlSession::close_channel(const Uuid& channel) {
  {
    std::lock_guard lk(mu_);
    erase_uuid(local_, channel);
    erase_uuid(remote_, channel);
  }
  send_raw({static_cast<std::uint8_t>(ControlType::CloseChannel), encode_close(channel)});
}

std::vector<ChannelDescriptor> ControlSession::local_channels() const {
  std::lock_guard lk(mu_);
  return local_;
}

std::vector<ChannelDescriptor> ControlSession::remote_channels() const {
  std::lock_guard lk(mu_);
  return remote_;
}

std::vector<ChannelDescriptor> ControlSession::channels_to_open() const {
  std::lock_guard lk(mu_);
  return merge_channels(local_, remote_);
}

void ControlSession::run() {
  while (!stopped_) {
    std::optional<Bytes> f;
    try {
      f = read_frame(*stream_);
    } catch (const Error&) {
      break;
    }
    if (!f) break;
    ControlMessage m;
    try {
      m = control_decode(*f);
    } catch (const Error&) {
      continue;
    }
    try {
      switch (m.msg_type) {
        case static_cast<std::uint8_t>(ControlType::SetupChannel): {
          ChannelDescriptor d = decode_setup(m.body);
          {
            std::lock_guard lk(mu_);
            remote_.push_back(d);
          }
          if (on_setup_) on_setup_(d);
          break;
        }
        case static_cast<std::uint8_t>(ControlType::CloseChannel): {
          Uuid u = decode_close(m.body);
          {
            std::lock_guard lk(mu_);
            erase_uuid(local_, u);
            erase_uuid(remote_, u);
          }
          if (on_close_) on_close_(u);
          break;
        }
        case static_cast<std::uint8_t>(ControlType::UnsupportedFeature):
          ++unsupported_received_;
          break;
        case static_cast<std::uint8_t>(ControlType::Hello):
          break;
        default:
          send_raw({static_cast<std::uint8_t>(ControlType::UnsupportedFeature), Bytes{m.msg_type}});
          ++unsupported_sent_;
          break;
      }
    } catch (const Error&) {
    }
  }
  stopped_ = true;
}

}  // namespace witchstack::alloy
