#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "witchstack/common/bytes.hpp"

namespace witchstack::link {

enum class Direction : std::uint8_t { ToWatch = 0, ToPhone = 1 };

std::string_view direction_name(Direction d) noexcept;

// One link frame as seen on the wire, prefix bytes included.
struct TranscriptRecord {
  std::uint64_t timestamp_us = 0;
  Direction direction = Direction::ToPhone;
  Bytes raw;
};

// Record layout: timestamp_us(8) | direction(1) | length(4) | raw.
constexpr std::size_t kTranscriptRecordHeader = 13;

Bytes encode_transcript_record(const TranscriptRecord& rec);

struct TranscriptParse {
  std::vector<TranscriptRecord> records;
  bool truncated = false;
  std::size_t truncated_at = 0;
  bool bad_direction = false;
};

// Never throws on malformed content; stops at the first record it cannot read.
TranscriptParse parse_transcript(ByteView bytes);

// Thread-safe appender. Writes to a file when a path is given, otherwise keeps
// the encoded transcript in memory.
class TranscriptWriter {
 public:
  TranscriptWriter() = default;
  explicit TranscriptWriter(const std::string& path);

  void write(Direction dir, ByteView raw);
  Bytes snapshot() const;
  std::size_t record_count() const;

 private:
  mutable std::mutex mu_;
  std::ofstream file_;
  Bytes memory_;
  std::size_t records_ = 0;
};

std::uint64_t now_micros();

}  // namespace witchstack::link
