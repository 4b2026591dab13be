#include "witchstack/alloy/channel.hpp"

#include <fstream>

#include <json.hpp>

#include "witchstack/common/error.hpp"

namespace witchstack::alloy {

void TopicRegistry::add(const std::string& topic, TopicHandler h) {
  std::lock_guard lk(mu_);
  handlers_[topic] = std::move(h);
}

std::optional<TopicHandler> TopicRegistry::find(const std::string& topic) const {
  std::lock_guard lk(mu_);
  auto it = handlers_.find(topic);
  if (it == handlers_.end()) return std::nullopt;
  return it->second;
}

AlloyTranscript::AlloyTranscript(const std::string& path) : path_(path) {
  std::ofstream(path_, std::ios::trunc);
}

void AlloyTranscript::record(const std::string& direction, const std::string& channel,
                             const AlloyMessage& m, const std::optional<std::string>& topic) {
  nlohmann::json j;
  j["direction"] = direction;
  j["channel"] = channel;
  j["type"] = m.msg_type;
  j["type_name"] = message_type_name(m.msg_type);
  j["sequence"] = m.sequence;
  j["stream"] = m.stream;
  j["topic"] = topic ? nlohmann::json(*topic) : nlohmann::json(nullptr);
  j["uuid"] = m.message_uuid;
  j["response_identifier"] = m.response_identifier;
  j["flags"] = m.flags();
  if (m.expiry) j["expiry"] = *m.expiry;
  j["payload_hex"] = to_hex(m.payload);
  std::string line = j.dump();
  std::lock_guard lk(mu_);
  lines_.push_back(line);
  if (!path_.empty()) std::ofstream(path_, std::ios::app) << line << '\n';
}

std::vector<std::string> AlloyTranscript::lines() const {
  std::lock_guard lk(mu_);
  return lines_;
}

std::pair<std::uint16_t, bool> StreamTable::stream_for(const std::string& topic) {
  auto it = by_topic_.find(topic);
  if (it != by_topic_.end()) return {it->second, false};
  if (next_ == 0) throw Error(Errc::PayloadTooLarge, "stream ids exhausted");
  std::uint16_t id = next_++;
  by_topic_[topic] = id;
  return {id, true};
}

bool StreamTable::bind(std::uint16_t stream, const std::string& topic) {
  auto it = by_stream_.find(stream);
  if (it != by_stream_.end()) return it->second == topic;
  by_stream_[stream] = topic;
  return true;
}

std::optional<std::string> StreamTable::topic_of(std::uint16_t stream) const {
  auto it = by_stream_.find(stream);
  if (it == by_stream_.end()) return std::nullopt;
  return it->second;
}

AlloyChannel::AlloyChannel(ChannelDescriptor d, StreamPtr stream,
                           std::shared_ptr<TopicRegistry> topics,
                           std::shared_ptr<AlloyTranscript> transcript, Clock clock)
    : desc_(std::move(d)),
      stream_(std::move(stream)),
      topics_(std::move(topics)),
      transcript_(std::move(transcript)),
      clock_(std::move(clock)) {}

AlloyChannel::~AlloyChannel() {
  close();
  if (reader_.joinable()) {
    if (reader_.get_id() == std::this_thread::get_id()) reader_.detach();
    else reader_.join();
  }
}

void AlloyChannel::start() { reader_ = std::thread([this] { run(); }); }

void AlloyChannel::close() {
  if (closed_.exchange(true)) return;
  stream_->close();
  ack_cv_.notify_all();
}

void AlloyChannel::write_message(AlloyMessage& m, const std::optional<std::string>& topic_for_log) {
  std::lock_guard lk(send_mu_);
  if (closed_) throw Error(Errc::SessionDown, desc_.name);
  m.sequence = next_seq_++;
  Bytes wire = alloy_encode(m);
  try {
    stream_->write(wire);
  } catch (const Error& e) {
    throw Error(Errc::SessionDown, e.what());
  }
  if (transcript_) transcript_->record("tx", desc_.name, m, topic_for_log);
}

std::string AlloyChannel::send_on_topic(const std::string& topic, ByteView payload,
                                        const SendOptions& opt) {
  if (closed_) throw Error(Errc::SessionDown, desc_.name);
  if (topic.empty()) throw Error(Errc::TopicMissing);
  AlloyMessage m;
  m.msg_type = static_cast<std::uint8_t>(opt.type);
  m.wants_app_ack = opt.wants_app_ack;
  m.expects_peer_response = opt.expects_response;
  m.expiry = opt.expiry;
  m.response_identifier = opt.response_to;
  m.message_uuid = new_uuid_text();
  m.compressed = opt.compress;
  m.payload = opt.compress ? deflate(payload) : Bytes(payload.begin(), payload.end());
  {
    std::lock_guard lk(send_mu_);
    auto [id, first] = tx_.stream_for(topic);
    m.stream = id;
    if (first) m.topic = topic;
    if (closed_) throw Error(Errc::SessionDown, desc_.name);
    m.sequence = next_seq_++;
    Bytes wire = alloy_encode(m);
    try {
      stream_->write(wire);
    } catch (const Error& e) {
      throw Error(Errc::SessionDown, e.what());
    }
    if (transcript_) transcript_->record("tx", desc_.name, m, topic);
  }
  std::lock_guard lk(state_mu_);
  ++stats_.sent;
  return m.message_uuid;
}

void AlloyChannel::send_ack(MessageType type, const AlloyMessage& original) {
  AlloyMessage ack;
  ack.msg_type = static_cast<std::uint8_t>(type);
  ack.stream = kAckStream;
  ack.response_identifier = original.message_uuid;
  ack.message_uuid = new_uuid_text();
  try {
    write_message(ack, std::nullopt);
  } catch (const Error&) {
    return;
  }
  std::lock_guard lk(state_mu_);
  ++stats_.acks_sent;
}

std::optional<MessageType> AlloyChannel::wait_ack(const std::string& uuid,
                                                  std::chrono::milliseconds timeout) {
  std::unique_lock lk(state_mu_);
  ack_cv_.wait_for(lk, timeout, [&] { return acks_.count(uuid) > 0 || closed_.load(); });
  auto it = acks_.find(uuid);
  if (it == acks_.end()) return std::nullopt;
  return it->second.front();
}

int AlloyChannel::ack_count(const std::string& uuid) const {
  std::lock_guard lk(state_mu_);
  auto it = acks_.find(uuid);
  return it == acks_.end() ? 0 : static_cast<int>(it->second.size());
}

ChannelStats AlloyChannel::stats() const {
  std::lock_guard lk(state_mu_);
  return stats_;
}

std::vector<DeadLetter> AlloyChannel::dead_letters() const {
  std::lock_guard lk(state_mu_);
  return dead_;
}

void AlloyChannel::dead_letter(const AlloyMessage& m, const std::string& topic,
                               const std::string& reason) {
  std::lock_guard lk(state_mu_);
  dead_.push_back({desc_.name, topic, m.message_uuid, reason});
}

void AlloyChannel::run() {
  for (;;) {
    std::optional<Bytes> frame;
    try {
      frame = read_frame(*stream_);
    } catch (const Error&) {
      break;
    }
    if (!frame) break;
    AlloyMessage m;
    try {
      m = alloy_decode(*frame);
    } catch (const Error& e) {
      AlloyMessage stub;
      dead_letter(stub, "", std::string("undecodable: ") + e.what());
      continue;
    }
    handle(m);
  }
  bool was_closed = closed_.exchange(true);
  ack_cv_.notify_all();
  if (!was_closed) stream_->close();
  if (on_closed_) on_closed_();
}

void AlloyChannel::handle(const AlloyMessage& m) {
  std::optional<std::string> topic;
  if (m.topic) {
    if (!rx_.bind(m.stream, *m.topic)) {
      if (transcript_) transcript_->record("rx", desc_.name, m, m.topic);
      dead_letter(m, *m.topic, "stream already bound to another topic");
      return;
    }
    topic = m.topic;
  } else {
    topic = rx_.topic_of(m.stream);
  }
  if (transcript_) transcript_->record("rx", desc_.name, m, topic);
  {
    std::lock_guard lk(state_mu_);
    ++stats_.received;
    if (m.sequence <= last_rx_seq_)
      dead_.push_back({desc_.name, topic.value_or(""), m.message_uuid, "sequence did not increase"});
    last_rx_seq_ = m.sequence;
  }

  if (m.msg_type == static_cast<std::uint8_t>(MessageType::Ack) ||
      m.msg_type == static_cast<std::uint8_t>(MessageType::ExpiredAck)) {
    std::lock_guard lk(state_mu_);
    acks_[m.response_identifier].push_back(static_cast<MessageType>(m.msg_type));
    ++stats_.acks_received;
    ack_cv_.notify_all();
    return;
  }

  if (m.expiry && clock_() > *m.expiry) {
    {
      std::lock_guard lk(state_mu_);
      ++stats_.expired;
    }
    send_ack(MessageType::ExpiredAck, m);
    return;
  }

  if (!topic) {
    dead_letter(m, "", "unknown stream " + std::to_string(m.stream));
  } else if (auto handler = topics_->find(*topic)) {
    Delivery d{desc_.name, *topic, {}, m};
    bool ok = true;
    if (m.compressed) {
      try {
        d.payload = inflate(m.payload);
      } catch (const Error&) {
        dead_letter(m, *topic, "bad compressed payload");
        ok = false;
      }
    } else {
      d.payload = m.payload;
    }
    if (ok) {
      try {
        (*handler)(d);
      } catch (const std::exception& e) {
        dead_letter(m, *topic, std::string("handler failed: ") + e.what());
      }
    }
  } else {
    dead_letter(m, *topic, "no handler for topic");
  }
  if (m.wants_app_ack) send_ack(MessageType::Ack, m);
}

}  // namespace witchstack::alloy
