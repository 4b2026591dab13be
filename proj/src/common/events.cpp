#include "witchstack/common/events.hpp"

#include <algorithm>
#include <chrono>

namespace witchstack {

std::string_view security_event_name(SecurityEventKind k) noexcept {
  switch (k) {
    case SecurityEventKind::UnauthenticatedNotify: return "UnauthenticatedNotify";
    case SecurityEventKind::ReplayDetected: return "ReplayDetected";
    case SecurityEventKind::TamperDetected: return "TamperDetected";
    case SecurityEventKind::ForgedSampleAccepted: return "ForgedSampleAccepted";
  }
  return "Unknown";
}

void SecurityLog::record(SecurityEventKind kind, std::string detail) {
  using namespace std::chrono;
  SecurityEvent ev{kind, std::move(detail),
                   static_cast<std::uint64_t>(
                       duration_cast<microseconds>(system_clock::now().time_since_epoch()).count())};
  std::vector<Subscriber> subs;
  {
    std::lock_guard lock(mu_);
    events_.push_back(ev);
    subs = subscribers_;
  }
  for (auto& s : subs) s(ev);
}

std::vector<SecurityEvent> SecurityLog::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::size_t SecurityLog::count(SecurityEventKind kind) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(events_.begin(), events_.end(), [&](const auto& e) { return e.kind == kind; }));
}

std::size_t SecurityLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

void SecurityLog::subscribe(Subscriber s) {
  std::lock_guard lock(mu_);
  subscribers_.push_back(std::move(s));
}

}  // namespace witchstack
