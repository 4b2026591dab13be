#include "witchstack/shoes/firewall.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "witchstack/common/error.hpp"

namespace witchstack::shoes {

namespace {

std::uint64_t now_ms() {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

void validate_process(const std::string& p) {
  if (p.empty()) throw Error(Errc::InvalidGlob, "empty process name");
}

void validate(const Matcher& m) {
  if (auto* h = std::get_if<HostMatch>(&m)) validate_glob(h->glob);
  else if (auto* p = std::get_if<ProcessMatch>(&m)) validate_process(p->process);
  else {
    auto& pair = std::get<PairMatch>(m);
    validate_glob(pair.glob);
    validate_process(pair.process);
  }
}

nlohmann::json matcher_json(const Matcher& m) {
  if (auto* h = std::get_if<HostMatch>(&m)) return {{"host", h->glob}};
  if (auto* p = std::get_if<ProcessMatch>(&m)) return {{"process", p->process}};
  auto& pair = std::get<PairMatch>(m);
  return {{"host", pair.glob}, {"process", pair.process}};
}

Matcher matcher_from(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::Malformed, "matcher must be an object");
  bool host = j.contains("host") && j["host"].is_string();
  bool proc = j.contains("process") && j["process"].is_string();
  if (host && proc) return PairMatch{j["host"].get<std::string>(), j["process"].get<std::string>()};
  if (host) return HostMatch{j["host"].get<std::string>()};
  if (proc) return ProcessMatch{j["process"].get<std::string>()};
  throw Error(Errc::Malformed, "matcher needs host or process");
}

Tier tier_of(const Matcher& m) {
  if (std::holds_alternative<PairMatch>(m)) return Tier::Pair;
  if (std::holds_alternative<ProcessMatch>(m)) return Tier::Process;
  return Tier::Host;
}

bool matches(const Matcher& m, const std::string& host, const std::optional<std::string>& process) {
  if (auto* h = std::get_if<HostMatch>(&m)) return glob_match(h->glob, host);
  if (auto* p = std::get_if<ProcessMatch>(&m)) return process && *process == p->process;
  auto& pair = std::get<PairMatch>(m);
  return process && *process == pair.process && glob_match(pair.glob, host);
}

}  // namespace

std::string_view action_name(Action a) { return a == Action::Allow ? "allow" : "block"; }

Action parse_action(std::string_view s) {
  if (s == "allow") return Action::Allow;
  if (s == "block") return Action::Block;
  throw Error(Errc::Malformed, "action must be allow or block");
}

bool glob_match(std::string_view g, std::string_view t) {
  std::size_t gi = 0, ti = 0, star = std::string_view::npos, mark = 0;
  while (ti < t.size()) {
    if (gi < g.size() && (g[gi] == '?' || lower(g[gi]) == lower(t[ti]))) {
      ++gi;
      ++ti;
    } else if (gi < g.size() && g[gi] == '*') {
      star = gi++;
      mark = ti;
    } else if (star != std::string_view::npos) {
      gi = star + 1;
      ti = ++mark;
    } else {
      return false;
    }
  }
  while (gi < g.size() && g[gi] == '*') ++gi;
  return gi == g.size();
}

void validate_glob(std::string_view g) {
  if (g.empty() || g.size() > 253) throw Error(Errc::InvalidGlob, "glob length");
  for (char c : g) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_' ||
              c == ':' || c == '*' || c == '?';
    if (!ok) throw Error(Errc::InvalidGlob, std::string("character '") + c + "'");
  }
}

Firewall::Firewall(Action default_action)
    : rules_(std::make_shared<const std::vector<FirewallRule>>()), default_(default_action) {}

Firewall::RuleSet Firewall::snapshot() const {
  std::lock_guard lock(mu_);
  return rules_;
}

FirewallRule Firewall::set(Matcher m, Action a) {
  validate(m);
  std::lock_guard lock(mu_);
  auto next = std::make_shared<std::vector<FirewallRule>>(*rules_);
  next->erase(std::remove_if(next->begin(), next->end(),
                             [&](const FirewallRule& r) { return r.matcher == m; }),
              next->end());
  FirewallRule rule{next_id_++, std::move(m), a, now_ms()};
  next->push_back(rule);
  rules_ = std::move(next);
  return rule;
}

bool Firewall::remove(std::uint64_t id) {
  std::lock_guard lock(mu_);
  auto next = std::make_shared<std::vector<FirewallRule>>(*rules_);
  auto it = std::remove_if(next->begin(), next->end(), [&](const FirewallRule& r) { return r.id == id; });
  if (it == next->end()) return false;
  next->erase(it, next->end());
  rules_ = std::move(next);
  return true;
}

void Firewall::clear() {
  std::lock_guard lock(mu_);
  rules_ = std::make_shared<const std::vector<FirewallRule>>();
}

std::vector<FirewallRule> Firewall::list() const { return *snapshot(); }

Decision Firewall::evaluate(const std::string& host, const std::optional<std::string>& process) const {
  auto rules = snapshot();
  std::optional<FirewallRule> best;
  for (auto& r : *rules) {
    if (!matches(r.matcher, host, process)) continue;
    if (!best || tier_of(r.matcher) < tier_of(best->matcher) ||
        (tier_of(r.matcher) == tier_of(best->matcher) && r.id > best->id))
      best = r;
  }
  if (!best) return Decision{default_action(), Tier::Default, std::nullopt};
  return Decision{best->action, tier_of(best->matcher), best->id};
}

Action Firewall::default_action() const {
  std::lock_guard lock(mu_);
  return default_;
}

void Firewall::set_default_action(Action a) {
  std::lock_guard lock(mu_);
  default_ = a;
}

std::string Firewall::to_json() const {
  auto rules = snapshot();
  nlohmann::json arr = nlohmann::json::array();
  for (auto& r : *rules)
    arr.push_back({{"id", r.id},
                   {"matcher", matcher_json(r.matcher)},
                   {"action", action_name(r.action)},
                   {"created_at", r.created_at_ms}});
  return arr.dump(2);
}

void Firewall::load_json(const std::string& text) {
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Malformed, e.what());
  }
  if (!arr.is_array()) throw Error(Errc::Malformed, "rules must be an array");
  std::vector<FirewallRule> rules;
  std::uint64_t id = 1;
  for (auto& j : arr) {
    if (!j.is_object() || !j.contains("matcher") || !j.contains("action") || !j["action"].is_string())
      throw Error(Errc::Malformed, "rule needs matcher and action");
    FirewallRule r;
    r.id = id++;
    r.matcher = matcher_from(j["matcher"]);
    validate(r.matcher);
    r.action = parse_action(j["action"].get<std::string>());
    r.created_at_ms = j.contains("created_at") && j["created_at"].is_number_unsigned()
                          ? j["created_at"].get<std::uint64_t>()
                          : now_ms();
    rules.push_back(std::move(r));
  }
  std::lock_guard lock(mu_);
  rules_ = std::make_shared<const std::vector<FirewallRule>>(std::move(rules));
  next_id_ = id;
}

void Firewall::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << to_json() << "\n";
}

void Firewall::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileUnreadable, path);
  load_json(std::string(std::istreambuf_iterator<char>(in), {}));
}

void TrafficCounters::connection(const TrafficKey& k) {
  std::lock_guard lock(mu_);
  auto& c = counters_[k];
  c.key = k;
  ++c.connection_count;
}

void TrafficCounters::blocked(const TrafficKey& k) {
  std::lock_guard lock(mu_);
  auto& c = counters_[k];
  c.key = k;
  ++c.blocked_count;
}

void TrafficCounters::up(const TrafficKey& k, std::uint64_t n) {
  std::lock_guard lock(mu_);
  auto& c = counters_[k];
  c.key = k;
  c.bytes_up += n;
}

void TrafficCounters::down(const TrafficKey& k, std::uint64_t n) {
  std::lock_guard lock(mu_);
  auto& c = counters_[k];
  c.key = k;
  c.bytes_down += n;
}

std::vector<TrafficCounter> TrafficCounters::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<TrafficCounter> out;
  for (auto& [k, c] : counters_) out.push_back(c);
  return out;
}

std::optional<TrafficCounter> TrafficCounters::get(const TrafficKey& k) const {
  std::lock_guard lock(mu_);
  auto it = counters_.find(k);
  if (it == counters_.end()) return std::nullopt;
  return it->second;
}

}  // namespace witchstack::shoes
