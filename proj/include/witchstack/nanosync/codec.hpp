#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "witchstack/common/bytes.hpp"

namespace witchstack::nanosync {

namespace sample_type {
constexpr std::uint8_t kHeartRate = 0x05;
constexpr std::uint8_t kActiveEnergy = 0x0a;
}  // namespace sample_type

// Registry of known sample type names; unknown codes are still carried.
std::string sample_type_name(std::uint8_t code);
void register_sample_type(std::uint8_t code, std::string name);

enum class Unit : std::uint8_t {
  Count = 0,
  CountPerMinute = 1,
  Kilocalorie = 2,
  Meter = 3,
  Second = 4,
  Percent = 5,
};

inline const std::string kQuantitySample = "Quantity Sample";

struct HealthSample {
  Uuid uuid{};
  std::uint8_t sample_type = 0;
  double value = 0;
  Unit unit = Unit::Count;
  std::uint64_t start_ms = 0;
  std::uint64_t end_ms = 0;
  std::string source;
  std::string provenance;
  bool operator==(const HealthSample&) const = default;
};

// uuid(16) type(1) unit(1) value(8) start(8) end(8)
constexpr std::size_t kSampleFixedSize = 42;

struct SyncAnchor {
  std::string domain;
  std::uint64_t value = 0;
  bool operator==(const SyncAnchor&) const = default;
};

// A delete carries what a tombstone keeps. purge marks a hardened delete,
// which carries no type or time.
struct Deletion {
  Uuid uuid{};
  std::uint8_t sample_type = 0;
  std::uint64_t deletion_ms = 0;
  bool purge = false;
  bool operator==(const Deletion&) const = default;
};

struct NanoSyncChange {
  std::string object_type;
  SyncAnchor start_anchor;
  SyncAnchor end_anchor;
  std::vector<HealthSample> inserts;
  std::vector<Deletion> deletes;
  bool operator==(const NanoSyncChange&) const = default;
};

enum class SyncStatus : std::uint8_t { Continue = 0, Done = 1 };

struct ChangeSet {
  SyncStatus status = SyncStatus::Done;
  // Receiver must drop its state for the listed domains before applying.
  bool reset = false;
  std::vector<NanoSyncChange> changes;
  bool operator==(const ChangeSet&) const = default;
};

struct StatusReply {
  std::vector<SyncAnchor> anchors;
  bool operator==(const StatusReply&) const = default;
};

using NanoSyncMessage = std::variant<ChangeSet, StatusReply>;

namespace tag {
constexpr std::uint8_t kPad = 0x00;
constexpr std::uint8_t kChangeSet = 0x01;
constexpr std::uint8_t kStatusReply = 0x02;
constexpr std::uint8_t kStatus = 0x10;
constexpr std::uint8_t kChange = 0x11;
constexpr std::uint8_t kReset = 0x12;
constexpr std::uint8_t kObjectType = 0x20;
constexpr std::uint8_t kStartAnchor = 0x21;
constexpr std::uint8_t kEndAnchor = 0x22;
constexpr std::uint8_t kInsert = 0x23;
constexpr std::uint8_t kDelete = 0x24;
constexpr std::uint8_t kSource = 0x30;
constexpr std::uint8_t kProvenance = 0x31;
constexpr std::uint8_t kAnchor = 0x40;
}  // namespace tag

constexpr std::size_t kTlvHeader = 5;  // tag(1) len(4)

// Inserted samples are padded so each uuid starts on a 16-byte boundary of
// the encoded message.
Bytes nanosync_encode(const NanoSyncMessage& msg);
NanoSyncMessage nanosync_decode(ByteView data);

// Offsets of every insert's uuid in nanosync_encode(msg), in message order.
std::vector<std::size_t> insert_offsets(const NanoSyncMessage& msg);

Bytes encode_sample(const HealthSample& s);
HealthSample decode_sample(ByteView body);

}  // namespace witchstack::nanosync
