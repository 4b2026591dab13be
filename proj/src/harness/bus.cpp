#include "witchstack/harness/bus.hpp"

#include <thread>

namespace witchstack::harness {

AlloyHub::~AlloyHub() {
  close_all();
  // Handlers may still hold a reference on their reader thread.
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
  for (auto& ch : retired_)
    while (ch.use_count() > 1 && std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
}

std::shared_ptr<alloy::AlloyChannel> AlloyHub::add(const alloy::ChannelDescriptor& d, StreamPtr stream) {
  auto ch = std::make_shared<alloy::AlloyChannel>(d, std::move(stream), topics_, transcript_);
  std::shared_ptr<alloy::AlloyChannel> old;
  {
    std::lock_guard lk(mu_);
    auto& slot = channels_[d.name];
    old = std::move(slot);
    slot = ch;
  }
  if (old) {
    old->close();
    std::lock_guard lk(mu_);
    retired_.push_back(std::move(old));
  }
  ch->start();
  return ch;
}

std::shared_ptr<alloy::AlloyChannel> AlloyHub::find(const std::string& name) const {
  std::lock_guard lk(mu_);
  auto it = channels_.find(name);
  if (it == channels_.end()) return nullptr;
  return it->second;
}

std::vector<std::string> AlloyHub::names() const {
  std::lock_guard lk(mu_);
  std::vector<std::string> out;
  for (auto& [n, ch] : channels_)
    if (!ch->closed()) out.push_back(n);
  return out;
}

void AlloyHub::close_all() {
  std::map<std::string, std::shared_ptr<alloy::AlloyChannel>> all;
  {
    std::lock_guard lk(mu_);
    all.swap(channels_);
  }
  for (auto& [n, ch] : all) ch->close();
  std::lock_guard lk(mu_);
  for (auto& [n, ch] : all) retired_.push_back(std::move(ch));
}

}  // namespace witchstack::harness
