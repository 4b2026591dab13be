#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <vector>

namespace witchstack::harness {

struct FeedEvent {
  std::uint64_t id = 0;
  std::string type;
  std::string data;  // JSON text
};

// Bounded live event stream for push clients. Ids start at 1.
class EventFeed {
 public:
  static constexpr std::size_t kRetention = 4096;

  std::uint64_t publish(std::string type, std::string data);
  std::vector<FeedEvent> since(std::uint64_t after) const;
  // Blocks until something newer than `after` exists or the timeout passes.
  std::vector<FeedEvent> wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const;
  std::uint64_t last_id() const;

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::deque<FeedEvent> events_;
  std::uint64_t next_ = 1;
};

}  // namespace witchstack::harness
