#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace witchstack::harness {

// Flat key/value configuration in a TOML subset: `[section]` headers,
// `key = value` lines, quoted or bare values, `#` comments. Keys are stored
// as section.key.
class Config {
 public:
  // Throws Malformed with the offending line number.
  static Config parse(std::string_view text);
  // Throws FileUnreadable.
  static Config load(const std::string& path);

  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace witchstack::harness
