#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "witchstack/alloy/control.hpp"
#include "witchstack/alloy/message.hpp"
#include "witchstack/common/stream.hpp"

namespace witchstack::alloy {

struct Delivery {
  std::string channel;
  std::string topic;
  Bytes payload;  // decompressed
  AlloyMessage message;
};

using TopicHandler = std::function<void(const Delivery&)>;

class TopicRegistry {
 public:
  void add(const std::string& topic, TopicHandler h);
  std::optional<TopicHandler> find(const std::string& topic) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, TopicHandler> handlers_;
};

struct DeadLetter {
  std::string channel;
  std::string topic;
  std::string uuid;
  std::string reason;
};

// JSON lines, one object per decoded message.
class AlloyTranscript {
 public:
  AlloyTranscript() = default;
  explicit AlloyTranscript(const std::string& path);

  void record(const std::string& direction, const std::string& channel, const AlloyMessage& m,
              const std::optional<std::string>& topic);
  std::vector<std::string> lines() const;

 private:
  mutable std::mutex mu_;
  std::string path_;
  std::vector<std::string> lines_;
};

// Sender-side stream allocation and receiver-side topic recovery.
class StreamTable {
 public:
  // Returns the stream id and whether this is its first use.
  std::pair<std::uint16_t, bool> stream_for(const std::string& topic);
  // TOP seen on `stream`; false if the stream is already bound elsewhere.
  bool bind(std::uint16_t stream, const std::string& topic);
  std::optional<std::string> topic_of(std::uint16_t stream) const;
  std::size_t size() const { return by_topic_.size() + by_stream_.size(); }

 private:
  std::map<std::string, std::uint16_t> by_topic_;
  std::map<std::uint16_t, std::string> by_stream_;
  std::uint16_t next_ = 1;
};

struct SendOptions {
  MessageType type = MessageType::Data;
  bool wants_app_ack = false;
  std::optional<std::uint32_t> expiry;
  bool expects_response = false;
  bool compress = false;
  std::string response_to;
};

struct ChannelStats {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t acks_sent = 0;
  std::uint64_t acks_received = 0;
  std::uint64_t expired = 0;
};

// One NWSC data channel. A reader thread decodes messages and runs topic
// handlers; sends are serialized by a mutex and may come from any thread.
class AlloyChannel {
 public:
  using Clock = std::function<std::uint32_t()>;

  AlloyChannel(ChannelDescriptor d, StreamPtr stream, std::shared_ptr<TopicRegistry> topics,
               std::shared_ptr<AlloyTranscript> transcript = nullptr, Clock clock = apple_time_now);
  ~AlloyChannel();
  AlloyChannel(const AlloyChannel&) = delete;
  AlloyChannel& operator=(const AlloyChannel&) = delete;

  void start();
  void close();
  bool closed() const { return closed_; }

  // Throws SessionDown once the channel is closed.
  std::string send_on_topic(const std::string& topic, ByteView payload, const SendOptions& opt = {});
  // Ack or ExpiredAck received for `uuid`.
  std::optional<MessageType> wait_ack(const std::string& uuid, std::chrono::milliseconds timeout);
  int ack_count(const std::string& uuid) const;

  void set_on_closed(std::function<void()> f) { on_closed_ = std::move(f); }

  const ChannelDescriptor& descriptor() const { return desc_; }
  ChannelStats stats() const;
  std::vector<DeadLetter> dead_letters() const;

 private:
  void run();
  void handle(const AlloyMessage& m);
  void dead_letter(const AlloyMessage& m, const std::string& topic, const std::string& reason);
  void send_ack(MessageType type, const AlloyMessage& original);
  void write_message(AlloyMessage& m, const std::optional<std::string>& topic_for_log);

  ChannelDescriptor desc_;
  StreamPtr stream_;
  std::shared_ptr<TopicRegistry> topics_;
  std::shared_ptr<AlloyTranscript> transcript_;
  Clock clock_;

  std::mutex send_mu_;
  std::uint32_t next_seq_ = 1;
  StreamTable tx_;

  StreamTable rx_;
  std::uint32_t last_rx_seq_ = 0;

  mutable std::mutex state_mu_;
  std::condition_variable ack_cv_;
  std::map<std::string, std::vector<MessageType>> acks_;
  std::vector<DeadLetter> dead_;
  ChannelStats stats_;

  std::atomic<bool> closed_{false};
  std::function<void()> on_closed_;
  std::thread reader_;
};

}  // namespace witchstack::alloy
