#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "witchstack/alloy/channel.hpp"

namespace witchstack::harness {

// The data channels of one link, by name.
class AlloyHub {
 public:
  explicit AlloyHub(std::shared_ptr<alloy::AlloyTranscript> transcript = nullptr)
      : topics_(std::make_shared<alloy::TopicRegistry>()), transcript_(std::move(transcript)) {}
  ~AlloyHub();

  std::shared_ptr<alloy::TopicRegistry> topics() const { return topics_; }
  // Starts the channel; a channel with the same name is closed first.
  std::shared_ptr<alloy::AlloyChannel> add(const alloy::ChannelDescriptor& d, StreamPtr stream);
  std::shared_ptr<alloy::AlloyChannel> find(const std::string& name) const;
  std::vector<std::string> names() const;
  void close_all();

 private:
  std::shared_ptr<alloy::TopicRegistry> topics_;
  std::shared_ptr<alloy::AlloyTranscript> transcript_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<alloy::AlloyChannel>> channels_;
  std::vector<std::shared_ptr<alloy::AlloyChannel>> retired_;
};

}  // namespace witchstack::harness
