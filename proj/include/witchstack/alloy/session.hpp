#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "witchstack/alloy/control.hpp"
#include "witchstack/common/stream.hpp"

namespace witchstack::alloy {

enum class Role { Watch, Phone };

struct ControlOptions {
  Role role = Role::Watch;
  Hello hello;
  std::vector<ChannelDescriptor> channels;
  std::chrono::milliseconds hello_timeout{5000};
};

// Channels the watch opens: one per distinct name across both announcements,
// using the local descriptor when both sides announced the name.
std::vector<ChannelDescriptor> merge_channels(const std::vector<ChannelDescriptor>& local,
                                              const std::vector<ChannelDescriptor>& remote);

class ControlSession {
 public:
  // Sends Hello and SetupChannel messages, then reads the peer's.
  // Errors: HelloTimeout, IncompatibleVersion.
  static std::unique_ptr<ControlSession> connect(StreamPtr stream, ControlOptions opt);
  ~ControlSession();

  // Background handling of later control traffic.
  void start();
  void stop();

  void setup_channel(const ChannelDescriptor& d);
  void close_channel(const Uuid& channel);
  void send_raw(const ControlMessage& m);

  void set_on_setup(std::function<void(const ChannelDescriptor&)> f) { on_setup_ = std::move(f); }
  void set_on_close(std::function<void(const Uuid&)> f) { on_close_ = std::move(f); }

  const Hello& peer_hello() const { return peer_hello_; }
  std::vector<ChannelDescriptor> local_channels() const;
  std::vector<ChannelDescriptor> remote_channels() const;
  std::vector<ChannelDescriptor> channels_to_open() const;
  int unsupported_sent() const { return unsupported_sent_; }
  int unsupported_received() const { return unsupported_received_; }
  bool alive() const { return !stopped_; }

 private:
  ControlSession(StreamPtr s, ControlOptions o) : stream_(std::move(s)), opt_(std::move(o)) {}
  void run();

  StreamPtr stream_;
  ControlOptions opt_;
  Hello peer_hello_;
  mutable std::mutex mu_;
  std::mutex send_mu_;
  std::vector<ChannelDescriptor> local_;
  std::vector<ChannelDescriptor> remote_;
  std::function<void(const ChannelDescriptor&)> on_setup_;
  std::function<void(const Uuid&)> on_close_;
  std::atomic<int> unsupported_sent_{0};
  std::atomic<int> unsupported_received_{0};
  std::atomic<bool> stopped_{false};
  std::thread reader_;
};

}  // namespace witchstack::alloy
