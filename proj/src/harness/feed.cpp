#include "witchstack/harness/feed.hpp"

namespace witchstack::harness {

std::uint64_t EventFeed::publish(std::string type, std::string data) {
  std::uint64_t id;
  {
    std::lock_guard lk(mu_);
    id = next_++;
    events_.push_back({id, std::move(type), std::move(data)});
    if (events_.size() > kRetention) events_.pop_front();
  }
  cv_.notify_all();
  return id;
}

std::vector<FeedEvent> EventFeed::since(std::uint64_t after) const {
  std::lock_guard lk(mu_);
  std::vector<FeedEvent> out;
  for (const auto& e : events_)
    if (e.id > after) out.push_back(e);
  return out;
}

std::vector<FeedEvent> EventFeed::wait_since(std::uint64_t after, std::chrono::milliseconds timeout) const {
  {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return next_ - 1 > after; });
  }
  return since(after);
}

std::uint64_t EventFeed::last_id() const {
  std::lock_guard lk(mu_);
  return next_ - 1;
}

}  // namespace witchstack::harness
