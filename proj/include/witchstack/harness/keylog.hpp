#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "witchstack/ike/handshake.hpp"

namespace witchstack::harness {

// One line per SA:
//   <class hex> <encr id> <spi_i> <spi_r> <esp i2r> <esp r2i> <ike i2r> <ike r2i>
// where each key is key_hex:salt_hex.
struct KeyLogEntry {
  ike::ProtectionClass protection_class = ike::ProtectionClass::C;
  ike::EncrAlg suite = ike::EncrAlg::AesGcm16_256;
  std::uint64_t spi_i = 0;
  std::uint64_t spi_r = 0;
  ike::KeyMaterial keys;

  static KeyLogEntry of(const ike::HandshakeResult& hs);
};

std::string format_keylog_line(const KeyLogEntry& e);
std::optional<KeyLogEntry> parse_keylog_line(const std::string& line);

class KeyLog {
 public:
  KeyLog() = default;
  // Appends each new entry to `path` as well.
  explicit KeyLog(std::string path) : path_(std::move(path)) {}
  // Throws FileUnreadable. Unparseable lines are skipped.
  static std::shared_ptr<KeyLog> load(const std::string& path);

  void add(const KeyLogEntry& e);
  std::vector<KeyLogEntry> entries() const;
  std::optional<KeyLogEntry> find(std::uint64_t spi_i, std::uint64_t spi_r) const;
  std::optional<KeyLogEntry> latest(ike::ProtectionClass c) const;

 private:
  mutable std::mutex mu_;
  std::string path_;
  std::vector<KeyLogEntry> entries_;
};

}  // namespace witchstack::harness
