#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

namespace witchstack {

enum class SecurityEventKind {
  UnauthenticatedNotify,
  ReplayDetected,
  TamperDetected,
  ForgedSampleAccepted,
};

std::string_view security_event_name(SecurityEventKind k) noexcept;

struct SecurityEvent {
  SecurityEventKind kind;
  std::string detail;
  std::uint64_t timestamp_us = 0;
};

// Append-only and thread-safe. Subscribers run on the appending thread and
// must not call back into the log.
class SecurityLog {
 public:
  using Subscriber = std::function<void(const SecurityEvent&)>;

  void record(SecurityEventKind kind, std::string detail);
  std::vector<SecurityEvent> snapshot() const;
  std::size_t count(SecurityEventKind kind) const;
  std::size_t size() const;
  void subscribe(Subscriber s);

 private:
  mutable std::mutex mu_;
  std::vector<SecurityEvent> events_;
  std::vector<Subscriber> subscribers_;
};

}  // namespace witchstack
