#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace witchstack::shoes {

enum class Action { Allow, Block };

std::string_view action_name(Action a);
Action parse_action(std::string_view s);

struct HostMatch {
  std::string glob;
  bool operator==(const HostMatch&) const = default;
};
struct ProcessMatch {
  std::string process;
  bool operator==(const ProcessMatch&) const = default;
};
struct PairMatch {
  std::string glob;
  std::string process;
  bool operator==(const PairMatch&) const = default;
};
using Matcher = std::variant<HostMatch, ProcessMatch, PairMatch>;

struct FirewallRule {
  std::uint64_t id = 0;
  Matcher matcher;
  Action action = Action::Allow;
  std::uint64_t created_at_ms = 0;
};

// '*' matches any run, '?' one character. Case-insensitive.
bool glob_match(std::string_view glob, std::string_view text);
// Throws InvalidGlob.
void validate_glob(std::string_view glob);

enum class Tier { Pair, Process, Host, Default };

struct Decision {
  Action action = Action::Allow;
  Tier tier = Tier::Default;
  std::optional<std::uint64_t> rule_id;
};

class Firewall {
 public:
  explicit Firewall(Action default_action = Action::Allow);

  // Replaces an existing rule with the same matcher. Takes effect for the
  // next decision.
  FirewallRule set(Matcher m, Action a);
  bool remove(std::uint64_t id);
  void clear();
  std::vector<FirewallRule> list() const;

  // Most specific tier wins; within a tier the newest rule.
  Decision evaluate(const std::string& host, const std::optional<std::string>& process) const;

  Action default_action() const;
  void set_default_action(Action a);

  std::string to_json() const;
  // Replaces the rule set.
  void load_json(const std::string& json);
  void save_file(const std::string& path) const;
  void load_file(const std::string& path);

 private:
  using RuleSet = std::shared_ptr<const std::vector<FirewallRule>>;
  RuleSet snapshot() const;

  mutable std::mutex mu_;
  RuleSet rules_;
  Action default_ = Action::Allow;
  std::uint64_t next_id_ = 1;
};

struct TrafficKey {
  std::string host;
  std::string process;
  auto operator<=>(const TrafficKey&) const = default;
};

struct TrafficCounter {
  TrafficKey key;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t connection_count = 0;
  std::uint64_t blocked_count = 0;
};

class TrafficCounters {
 public:
  void connection(const TrafficKey& k);
  void blocked(const TrafficKey& k);
  void up(const TrafficKey& k, std::uint64_t n);
  void down(const TrafficKey& k, std::uint64_t n);
  std::vector<TrafficCounter> snapshot() const;
  std::optional<TrafficCounter> get(const TrafficKey& k) const;

 private:
  mutable std::mutex mu_;
  std::map<TrafficKey, TrafficCounter> counters_;
};

}  // namespace witchstack::shoes
