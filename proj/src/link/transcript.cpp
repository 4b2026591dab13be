#include "witchstack/link/transcript.hpp"

namespace witchstack::link {

std::string_view direction_name(Direction d) noexcept {
  return d == Direction::ToWatch ? "to-watch" : "to-phone";
}

std::uint64_t now_micros() {
  using namespace std::chrono;
  return static_cast<std::uint64_t>(
      duration_cast<microseconds>(system_clock::now().time_since_epoch()).count());
}

Bytes encode_transcript_record(const TranscriptRecord& rec) {
  ByteWriter w(kTranscriptRecordHeader + rec.raw.size());
  w.u64(rec.timestamp_us)
      .u8(static_cast<std::uint8_t>(rec.direction))
      .u32(static_cast<std::uint32_t>(rec.raw.size()))
      .raw(rec.raw);
  return std::move(w).take();
}

TranscriptParse parse_transcript(ByteView bytes) {
  TranscriptParse out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < kTranscriptRecordHeader) {
      out.truncated = true;
      out.truncated_at = pos;
      break;
    }
    ByteReader r(bytes.subspan(pos));
    TranscriptRecord rec;
    rec.timestamp_us = r.u64();
    std::uint8_t dir = r.u8();
    std::uint32_t len = r.u32();
    if (dir > 1) {
      out.bad_direction = true;
      out.truncated = true;
      out.truncated_at = pos;
      break;
    }
    if (r.remaining() < len) {
      out.truncated = true;
      out.truncated_at = pos;
      break;
    }
    rec.direction = static_cast<Direction>(dir);
    rec.raw = r.bytes(len);
    out.records.push_back(std::move(rec));
    pos += kTranscriptRecordHeader + len;
  }
  return out;
}

TranscriptWriter::TranscriptWriter(const std::string& path)
    : file_(path, std::ios::binary | std::ios::trunc) {
  if (!file_) throw Error(Errc::Io, "cannot open transcript " + path);
}

void TranscriptWriter::write(Direction dir, ByteView raw) {
  Bytes rec = encode_transcript_record({now_micros(), dir, Bytes(raw.begin(), raw.end())});
  std::lock_guard lock(mu_);
  if (file_.is_open()) {
    file_.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    file_.flush();
  }
  append(memory_, rec);
  ++records_;
}

Bytes TranscriptWriter::snapshot() const {
  std::lock_guard lock(mu_);
  return memory_;
}

std::size_t TranscriptWriter::record_count() const {
  std::lock_guard lock(mu_);
  return records_;
}

}  // namespace witchstack::link
