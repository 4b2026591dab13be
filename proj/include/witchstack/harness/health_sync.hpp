#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>

#include "witchstack/aoverc/aoverc.hpp"
#include "witchstack/common/events.hpp"
#include "witchstack/nanosync/store.hpp"

namespace witchstack::harness {

inline const std::string kHealthTopic = "com.apple.private.alloy.health.sync.classc";

// NanoSync messages sealed as A-over-C records.
Bytes seal_health(const aoverc::Keyring& keys, const nanosync::NanoSyncMessage& msg, aoverc::Mode mode);
// Errors from the record, envelope and NanoSync decoders.
nanosync::NanoSyncMessage open_health(const aoverc::Keyring& keys, ByteView record, aoverc::Mode mode);

struct HealthServerStats {
  std::uint64_t received = 0;
  std::uint64_t rejected = 0;
  std::uint64_t applied = 0;
};

// Receiving end: applies change sets to the store and answers with its anchors.
class HealthSyncServer {
 public:
  using AppliedObserver = std::function<void(const nanosync::ChangeSet&, const nanosync::ApplyResult&)>;

  HealthSyncServer(std::shared_ptr<nanosync::HealthStore> store, aoverc::Keyring keys,
                   aoverc::Mode mode, std::shared_ptr<SecurityLog> log);

  // Reply record, or nullopt when the request was dropped.
  std::optional<Bytes> handle(ByteView record);
  void set_mode(aoverc::Mode m) { mode_ = m; }
  aoverc::Mode mode() const { return mode_; }
  void set_on_applied(AppliedObserver f) { on_applied_ = std::move(f); }
  HealthServerStats stats() const { return {received_, rejected_, applied_}; }
  nanosync::HealthStore& store() { return *store_; }

 private:
  std::shared_ptr<nanosync::HealthStore> store_;
  aoverc::Keyring keys_;
  std::atomic<aoverc::Mode> mode_;
  std::shared_ptr<SecurityLog> log_;
  AppliedObserver on_applied_;
  std::atomic<std::uint64_t> received_{0}, rejected_{0}, applied_{0};
};

// Sending end. `exchange` delivers one record and returns the reply, or
// nullopt on timeout.
class HealthSyncClient {
 public:
  using Exchange = std::function<std::optional<Bytes>(Bytes)>;

  HealthSyncClient(std::shared_ptr<nanosync::HealthStore> store, aoverc::Keyring keys,
                   aoverc::Mode mode);

  // Runs until the peer's anchors match ours. Returns false when a round
  // failed `max_attempts` times in a row.
  bool sync(const Exchange& exchange, int max_attempts = 5,
            std::size_t batch = nanosync::kBatchSize);
  const std::vector<nanosync::SyncAnchor>& peer_anchors() const { return acked_; }
  std::uint64_t rounds() const { return rounds_; }
  std::uint64_t retries() const { return retries_; }
  void set_mode(aoverc::Mode m) { mode_ = m; }

 private:
  std::shared_ptr<nanosync::HealthStore> store_;
  aoverc::Keyring keys_;
  aoverc::Mode mode_;
  std::vector<nanosync::SyncAnchor> acked_;
  std::uint64_t rounds_ = 0;
  std::uint64_t retries_ = 0;
};

}  // namespace witchstack::harness
