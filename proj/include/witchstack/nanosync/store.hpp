#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "witchstack/nanosync/codec.hpp"

namespace witchstack::nanosync {

constexpr std::size_t kBatchSize = 50;
constexpr std::size_t kMaxHeldBack = 4096;

// Supplies the store key. nullopt means the key is unavailable (device locked).
class KeyProvider {
 public:
  virtual ~KeyProvider() = default;
  virtual std::optional<Bytes> key(ByteView salt) = 0;
};

struct ScryptParams {
  std::uint8_t log2_n = 14;
  std::uint8_t r = 8;
  std::uint8_t p = 1;
};

class PassphraseKeyProvider : public KeyProvider {
 public:
  explicit PassphraseKeyProvider(std::string passphrase, ScryptParams params = {})
      : passphrase_(std::move(passphrase)), params_(params) {}
  std::optional<Bytes> key(ByteView salt) override;
  void set_locked(bool locked) { locked_ = locked; }
  const ScryptParams& params() const { return params_; }

 private:
  std::string passphrase_;
  ScryptParams params_;
  bool locked_ = false;
};

// One row as a query sees it. Tombstones carry only uuid, type and
// deletion time.
struct StoredSample {
  Uuid uuid{};
  std::uint8_t sample_type = 0;
  bool deleted = false;
  std::optional<double> value;
  std::optional<Unit> unit;
  std::optional<std::uint64_t> start_ms;
  std::optional<std::uint64_t> end_ms;
  std::optional<std::string> source;
  std::optional<std::string> provenance;
  std::optional<std::uint64_t> deletion_ms;
  bool operator==(const StoredSample&) const = default;
};

struct QueryFilter {
  std::optional<std::uint8_t> sample_type;
  std::optional<std::uint64_t> from_ms;  // inclusive, on start time (deletion time for tombstones)
  std::optional<std::uint64_t> to_ms;    // exclusive
  bool include_tombstones = false;
};

struct ApplyResult {
  StatusReply reply;
  std::size_t applied = 0;
  std::size_t held_back = 0;
  std::size_t duplicates = 0;
};

class HealthStore {
 public:
  using Clock = std::function<std::uint64_t()>;
  using Warn = std::function<void(const std::string&)>;

  // In-memory store, never persisted.
  HealthStore();
  // Opens or creates the encrypted file at path. Stays locked if the key
  // provider cannot supply a key.
  HealthStore(std::filesystem::path path, std::shared_ptr<KeyProvider> keys);

  HealthStore(const HealthStore&) = delete;
  HealthStore& operator=(const HealthStore&) = delete;

  bool locked() const;
  // Saves and drops all plaintext state.
  void lock();
  void unlock();
  void save();
  const std::optional<std::filesystem::path>& path() const { return path_; }

  void set_clock(Clock c) { clock_ = std::move(c); }
  void set_warn(Warn w) { warn_ = std::move(w); }

  // Local mutations. Each call is one change in the sample's domain.
  SyncAnchor insert(std::vector<HealthSample> samples, const std::string& domain = kQuantitySample);
  SyncAnchor remove(const std::vector<Uuid>& uuids, const std::string& domain = kQuantitySample);
  // Propagates a purge to peers and erases every trace of the uuid locally.
  void hardened_delete(const Uuid& uuid);

  std::vector<StoredSample> query(const QueryFilter& filter = {}) const;
  std::vector<HealthSample> live_samples() const;
  std::vector<SyncAnchor> anchors() const;
  std::uint64_t anchor(const std::string& domain) const;
  std::size_t held_back() const;
  std::size_t resyncs() const { return resyncs_; }

  // Throws PeerAhead if any peer anchor is beyond ours.
  ChangeSet produce_changes(const std::vector<SyncAnchor>& peer_anchors,
                            std::size_t batch = kBatchSize) const;
  // Full replay from anchor 0 with the reset flag set.
  ChangeSet produce_reset(std::size_t batch = kBatchSize) const;
  ApplyResult apply_changes(const ChangeSet& cs);

  // Encrypted file image. Exposed for at-rest checks.
  Bytes serialize_sealed() const;

 private:
  struct Row {
    std::uint8_t sample_type = 0;
    std::optional<HealthSample> live;
    std::uint64_t deletion_ms = 0;
    std::string domain;
  };
  struct Domain {
    std::vector<NanoSyncChange> journal;  // journal[i] has end anchor i+1
    std::map<std::uint64_t, NanoSyncChange> held;
  };

  void require_open() const;
  void unlock_or_stay_locked();
  std::uint64_t now() const;
  SyncAnchor append_change(const std::string& domain, std::vector<HealthSample> inserts,
                           std::vector<Deletion> deletes);
  void apply_one(const NanoSyncChange& c);
  void tombstone(const Deletion& d, const std::string& domain);
  void purge(const Uuid& uuid);
  void rewrite_journal(const Uuid& uuid, const Deletion& as);
  Bytes serialize_plain() const;
  void load_plain(ByteView body);
  void load_file();
  std::vector<SyncAnchor> anchors_locked() const;

  mutable std::shared_mutex mu_;
  std::optional<std::filesystem::path> path_;
  std::shared_ptr<KeyProvider> keys_;
  Bytes salt_;
  std::optional<Bytes> key_;
  bool open_ = false;
  std::map<Uuid, Row> rows_;
  std::map<std::string, Domain> domains_;
  std::size_t resyncs_ = 0;
  Clock clock_;
  Warn warn_;
};

}  // namespace witchstack::nanosync
