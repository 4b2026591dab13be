#include "witchstack/harness/keylog.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace witchstack::harness {

namespace {

std::string key_text(const ike::DirectionalKey& k) { return to_hex(k.key) + ":" + to_hex(k.salt); }

std::optional<ike::DirectionalKey> parse_key(const std::string& s) {
  auto colon = s.find(':');
  if (colon == std::string::npos) return std::nullopt;
  try {
    ike::DirectionalKey k{from_hex(s.substr(0, colon)), from_hex(s.substr(colon + 1))};
    if (k.key.empty() || k.salt.size() != 4) return std::nullopt;
    return k;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::optional<std::uint64_t> parse_u64(const std::string& s) {
  if (s.empty() || s.size() > 16) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else return std::nullopt;
    v = v << 4 | static_cast<std::uint64_t>(d);
  }
  return v;
}

}  // namespace

KeyLogEntry KeyLogEntry::of(const ike::HandshakeResult& hs) {
  return {hs.protection_class, hs.suite.encryption, hs.spi_i, hs.spi_r, hs.keys};
}

std::string format_keylog_line(const KeyLogEntry& e) {
  char head[64];
  std::snprintf(head, sizeof head, "%02x %u %016llx %016llx",
                static_cast<unsigned>(e.protection_class), static_cast<unsigned>(e.suite),
                static_cast<unsigned long long>(e.spi_i), static_cast<unsigned long long>(e.spi_r));
  return std::string(head) + " " + key_text(e.keys.esp_i2r) + " " + key_text(e.keys.esp_r2i) + " " +
         key_text(e.keys.ike_i2r) + " " + key_text(e.keys.ike_r2i);
}

std::optional<KeyLogEntry> parse_keylog_line(const std::string& line) {
  std::istringstream in(line);
  std::string cls, suite, spi_i, spi_r, k[4];
  if (!(in >> cls >> suite >> spi_i >> spi_r >> k[0] >> k[1] >> k[2] >> k[3])) return std::nullopt;
  KeyLogEntry e;
  if (cls == "43") e.protection_class = ike::ProtectionClass::C;
  else if (cls == "44") e.protection_class = ike::ProtectionClass::D;
  else return std::nullopt;
  if (suite == "20") e.suite = ike::EncrAlg::AesGcm16_256;
  else if (suite == "28") e.suite = ike::EncrAlg::ChaCha20Poly1305;
  else return std::nullopt;
  auto si = parse_u64(spi_i), sr = parse_u64(spi_r);
  if (!si || !sr) return std::nullopt;
  e.spi_i = *si;
  e.spi_r = *sr;
  ike::DirectionalKey* dst[4] = {&e.keys.esp_i2r, &e.keys.esp_r2i, &e.keys.ike_i2r, &e.keys.ike_r2i};
  for (int i = 0; i < 4; ++i) {
    auto key = parse_key(k[i]);
    if (!key) return std::nullopt;
    *dst[i] = std::move(*key);
  }
  return e;
}

std::shared_ptr<KeyLog> KeyLog::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::FileUnreadable, path);
  auto log = std::make_shared<KeyLog>();
  std::string line;
  while (std::getline(f, line))
    if (auto e = parse_keylog_line(line)) log->add(*e);
  return log;
}

void KeyLog::add(const KeyLogEntry& e) {
  std::lock_guard lock(mu_);
  for (const auto& x : entries_)
    if (x.spi_i == e.spi_i && x.spi_r == e.spi_r) return;
  entries_.push_back(e);
  if (!path_.empty()) {
    std::ofstream f(path_, std::ios::app);
    f << format_keylog_line(e) << '\n';
  }
}

std::vector<KeyLogEntry> KeyLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::optional<KeyLogEntry> KeyLog::find(std::uint64_t spi_i, std::uint64_t spi_r) const {
  std::lock_guard lock(mu_);
  for (const auto& e : entries_)
    if (e.spi_i == spi_i && e.spi_r == spi_r) return e;
  return std::nullopt;
}

std::optional<KeyLogEntry> KeyLog::latest(ike::ProtectionClass c) const {
  std::lock_guard lock(mu_);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->protection_class == c) return *it;
  return std::nullopt;
}

}  // namespace witchstack::harness
