#include "witchstack/link/nrlp.hpp"

namespace witchstack::link {

bool is_known_nrlp_type(std::uint8_t type) noexcept {
  return type <= 0x05 || (type >= 0x64 && type <= 0x69);
}

std::string_view nrlp_type_name(std::uint8_t type) noexcept {
  switch (type) {
    case 0x00: return "Pad0";
    case 0x01: return "PadN";
    case 0x02: return "UncompressedIP";
    case 0x03: return "Encapsulated6LoWPAN";
    case 0x04: return "IKEv2";
    case 0x05: return "Echo";
    case 0x64: return "ESP";
    case 0x65: return "ESP_ECT0";
    case 0x66: return "TCP";
    case 0x67: return "TCP_ECT0";
    case 0x68: return "ESP_ClassC";
    case 0x69: return "ESP_ClassC_ECT0";
    default: return "Unknown";
  }
}

std::uint16_t internet_checksum(ByteView data) noexcept {
  std::uint32_t sum = 0;
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) sum += (std::uint32_t{data[i]} << 8) | data[i + 1];
  if (i < data.size()) sum += std::uint32_t{data[i]} << 8;
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

std::uint16_t nrlp_checksum(std::uint8_t frame_type, std::uint16_t length,
                            ByteView covered) noexcept {
  if (frame_type < kXorChecksumThreshold) return internet_checksum(covered);
  auto high = static_cast<std::uint8_t>((length >> 8) ^ (frame_type >> 4));
  auto low = static_cast<std::uint8_t>((length & 0xff) ^ static_cast<std::uint8_t>(frame_type << 4));
  return static_cast<std::uint16_t>((high << 8) | low);
}

namespace {
std::uint16_t checksum_over_encoding(ByteView encoded_without_trailer) {
  auto type = encoded_without_trailer[0];
  auto length = static_cast<std::uint16_t>((encoded_without_trailer[1] << 8) |
                                           encoded_without_trailer[2]);
  return nrlp_checksum(type, length, encoded_without_trailer);
}
}  // namespace

NrlpFrame make_nrlp_frame(std::uint8_t type, Bytes payload) {
  NrlpFrame f{type, std::move(payload), 0};
  Bytes wire = nrlp_encode(f);
  f.checksum = static_cast<std::uint16_t>((wire[wire.size() - 2] << 8) | wire.back());
  return f;
}

Bytes nrlp_encode(const NrlpFrame& frame) {
  if (frame.payload.size() > 0xffff)
    throw Error(Errc::PayloadTooLarge, std::to_string(frame.payload.size()) + " bytes");
  ByteWriter w(frame.payload.size() + kNrlpOverhead);
  w.u8(frame.type).u16(static_cast<std::uint16_t>(frame.payload.size())).raw(frame.payload);
  w.u16(checksum_over_encoding(w.bytes()));
  return std::move(w).take();
}

NrlpDecoded nrlp_decode(ByteView bytes, NrlpDecodeOptions options) {
  if (bytes.size() < kNrlpOverhead) throw Error(Errc::TruncatedFrame, "short header");
  std::uint8_t type = bytes[0];
  std::size_t length = (std::size_t{bytes[1]} << 8) | bytes[2];
  std::size_t total = length + kNrlpOverhead;
  if (bytes.size() < total) throw Error(Errc::TruncatedFrame, "short payload");
  std::uint16_t wire_checksum =
      static_cast<std::uint16_t>((bytes[total - 2] << 8) | bytes[total - 1]);
  if (checksum_over_encoding(bytes.first(total - 2)) != wire_checksum)
    throw Error(Errc::ChecksumMismatch, "type " + std::to_string(type));
  if (options.reject_unknown_types && !is_known_nrlp_type(type))
    throw Error(Errc::UnknownType, std::to_string(type));
  auto payload = bytes.subspan(kNrlpHeaderSize, length);
  return {NrlpFrame{type, Bytes(payload.begin(), payload.end()), wire_checksum}, total};
}

std::optional<NrlpFrame> NrlpStreamDecoder::next() {
  while (true) {
    if (buffer_.size() < kNrlpOverhead) return std::nullopt;
    std::size_t total = ((std::size_t{buffer_[1]} << 8) | buffer_[2]) + kNrlpOverhead;
    if (buffer_.size() < total) return std::nullopt;
    try {
      auto decoded = nrlp_decode(buffer_, options_);
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
      return std::move(decoded.frame);
    } catch (const Error& e) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
      if (e.code() == Errc::ChecksumMismatch)
        ++checksum_failures_;
      else
        ++unknown_drops_;
    }
  }
}

NrlpFrame echo_service(const NrlpFrame& frame) {
  if (frame.type != static_cast<std::uint8_t>(NrlpType::Echo) || frame.payload.empty() ||
      frame.payload[0] != 0x01)
    throw Error(Errc::NotAPing);
  Bytes pong = frame.payload;
  pong[0] = 0x02;
  return make_nrlp_frame(frame.type, std::move(pong));
}

}  // namespace witchstack::link
