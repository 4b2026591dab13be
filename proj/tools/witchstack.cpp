#include <CLI11.hpp>
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <csignal>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <random>
#include <thread>

#include "witchstack/common/error.hpp"
#include "witchstack/harness/config.hpp"
#include "witchstack/harness/control_api.hpp"
#include "witchstack/harness/dissect.hpp"
#include "witchstack/harness/scenario.hpp"
#include "witchstack/harness/watch.hpp"

using namespace witchstack;
using namespace witchstack::harness;
using namespace std::chrono_literals;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Common {
  std::string config_path;
  std::string identity_path;
  Config config;

  void load() {
    if (!config_path.empty()) config = Config::load(config_path);
  }
  std::string pick(const std::string& flag, const std::string& key, const std::string& fallback = "") const {
    return flag.empty() ? config.get_or(key, fallback) : flag;
  }
  std::string identity(const std::string& section) const {
    std::string p = pick(identity_path, section + ".identity");
    if (p.empty()) throw Error(Errc::BadIdentityFile, "no identity file given");
    return p;
  }
};

aoverc::Mode parse_mode(const std::string& s) {
  if (s == "faithful" || s == "cbc") return aoverc::Mode::Faithful;
  if (s == "aead") return aoverc::Mode::AeadMitigated;
  throw Error(Errc::Malformed, "health mode " + s);
}

bool usage_error(Errc c) {
  switch (c) {
    case Errc::ScenarioUnknown:
    case Errc::BadIdentityFile:
    case Errc::FileUnreadable:
    case Errc::Malformed:
    case Errc::InvalidGlob:
      return true;
    default:
      return false;
  }
}

int run_phone(const Common& common, std::uint16_t port_flag, int api_port_flag, const std::string& transcript,
              const std::string& alloy_log, const std::string& keylog, bool vulnerable, const std::string& mode,
              const std::string& rules, double run_for) {
  Identity id = load_identity(common.identity("phone"));
  const auto& cfg = common.config;
  PhoneOptions po;
  po.host = cfg.get_or("phone.host", "127.0.0.1");
  po.port = port_flag ? port_flag : static_cast<std::uint16_t>(cfg.get_int("phone.port", 0));
  if (auto t = common.pick(transcript, "phone.transcript"); !t.empty())
    po.transcript = std::make_shared<link::TranscriptWriter>(t);
  if (auto t = common.pick(alloy_log, "phone.alloy_transcript"); !t.empty())
    po.alloy_transcript = std::make_shared<alloy::AlloyTranscript>(t);
  if (auto k = common.pick(keylog, "phone.keylog"); !k.empty()) po.engine.keylog = std::make_shared<KeyLog>(k);
  po.engine.strict_notify = !vulnerable && cfg.get_bool("phone.strict", true);
  po.engine.wifi_routing = cfg.get_bool("phone.wifi_routing", false);
  po.health_mode = parse_mode(common.pick(mode, "phone.health_mode", "faithful"));
  po.firewall_file = common.pick(rules, "phone.firewall");
  PhoneEndpoint phone(std::move(id), po);
  phone.start();
  ControlApiOptions ao;
  ao.host = cfg.get_or("api.host", "127.0.0.1");
  ao.allow_remote = cfg.get_bool("api.allow_remote", false);
  ao.port = static_cast<std::uint16_t>(api_port_flag >= 0 ? api_port_flag : cfg.get_int("api.port", 0));
  ControlApi api(phone, ao);
  api.start();
  std::cout << "phone listening on " << po.host << ":" << phone.port() << "\n"
            << "control api on " << ao.host << ":" << api.port() << "\n"
            << std::flush;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(run_for);
  while (!g_stop && (run_for <= 0 || std::chrono::steady_clock::now() < deadline)) std::this_thread::sleep_for(50ms);
  api.stop();
  phone.stop();
  return kExitPass;
}

int run_watch(const Common& common, const std::string& host_flag, std::uint16_t port_flag, std::size_t samples,
              const std::string& mode, const std::string& fetch, std::uint64_t seed) {
  Identity id = load_identity(common.identity("watch"));
  const auto& cfg = common.config;
  WatchOptions wo;
  wo.host = common.pick(host_flag, "watch.host", "127.0.0.1");
  wo.port = port_flag ? port_flag : static_cast<std::uint16_t>(cfg.get_int("watch.port", 0));
  if (!wo.port) throw Error(Errc::Malformed, "phone port required");
  wo.health_mode = parse_mode(common.pick(mode, "watch.health_mode", "faithful"));
  WatchEmulator watch(std::move(id), wo);
  watch.connect();
  std::cout << "connected, " << watch.channels().size() << " channel(s)\n";
  if (samples) {
    std::mt19937_64 rng(seed);
    std::vector<nanosync::HealthSample> batch;
    std::uint64_t now = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
            .count());
    for (std::size_t i = 0; i < samples; ++i) {
      nanosync::HealthSample s;
      for (auto& b : s.uuid) b = static_cast<std::uint8_t>(rng());
      s.sample_type = nanosync::sample_type::kHeartRate;
      s.unit = nanosync::Unit::CountPerMinute;
      s.value = static_cast<double>(55 + rng() % 100);
      s.start_ms = now - (samples - i) * 5000;
      s.end_ms = s.start_ms + 5000;
      s.source = "Watch";
      batch.push_back(s);
    }
    watch.store()->insert(batch);
    bool ok = watch.sync_health();
    std::cout << "synced " << samples << " sample(s) in " << watch.health().rounds() << " round(s): "
              << (ok ? "ok" : "incomplete") << "\n";
    if (!ok) return kExitFail;
  }
  if (!fetch.empty()) {
    auto colon = fetch.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::Malformed, "fetch needs host:port");
    shoes::ShoesRequest req;
    req.destination = shoes::Hostname{fetch.substr(0, colon)};
    req.port = static_cast<std::uint16_t>(std::stoi(fetch.substr(colon + 1)));
    req.process_name = "witchstack";
    auto r = watch.shoes_fetch(req, to_bytes("GET / HTTP/1.0\r\n\r\n"));
    std::cout << "shoes reply domain=" << int(r.reply.domain) << " code=" << int(r.reply.code)
              << (r.reply.denied() ? " denied" : "") << ", " << r.received.size() << " byte(s) back\n";
  }
  watch.disconnect();
  return kExitPass;
}

int run_scenario_cmd(const std::string& name, bool list, std::uint64_t seed, std::size_t samples, bool as_json,
                     const std::string& transcript_out, const std::string& keylog_out, const std::string& alloy_out) {
  if (list || name.empty()) {
    for (const auto& n : scenario_names()) std::cout << n << "\n";
    return name.empty() && !list ? kExitUsage : kExitPass;
  }
  ScenarioOptions o;
  o.seed = seed;
  o.samples = samples;
  auto r = run_scenario(name, o);
  std::cout << (as_json ? r.to_json() + "\n" : r.to_text());
  if (!transcript_out.empty()) {
    std::ofstream f(transcript_out, std::ios::binary);
    f.write(reinterpret_cast<const char*>(r.link_transcript.data()),
            static_cast<std::streamsize>(r.link_transcript.size()));
  }
  if (!keylog_out.empty()) {
    std::ofstream f(keylog_out);
    for (const auto& l : r.keylog_lines) f << l << "\n";
  }
  if (!alloy_out.empty()) {
    std::ofstream f(alloy_out);
    for (const auto& l : r.alloy_lines) f << l << "\n";
  }
  if (r.passed) return kExitPass;
  std::string failed;
  for (const auto& c : r.checks)
    if (!c.passed) failed += "\n  - " + c.name + (c.detail.empty() ? "" : " (" + c.detail + ")");
  throw Error(Errc::AssertionFailed, name + failed);
}

int run_dissect(const std::string& path, const std::string& keylog, const std::vector<std::string>& identities,
                bool as_json) {
  DissectOptions opt;
  if (!keylog.empty()) opt.keylog = KeyLog::load(keylog);
  for (const auto& p : identities) opt.keyrings.push_back(load_identity(p).aoverc);
  auto d = dissect_file(path, opt);
  std::cout << (as_json ? render_json(d) + "\n" : render_text(d));
  return kExitPass;
}


struct ApiTarget {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string call(const std::string& method, const std::string& path, const std::string& body = "") const {
    httplib::Client c(host, port);
    c.set_connection_timeout(2, 0);
    httplib::Result r = method == "GET"    ? c.Get(path)
                        : method == "PUT"  ? c.Put(path, body, "application/json")
                                           : c.Post(path, body, "application/json");
    if (!r) throw Error(Errc::ConnectFailure, "control api at " + host + ":" + std::to_string(port));
    if (r->status == 400 || r->status == 404) throw Error(Errc::Malformed, r->body);
    if (r->status != 200) throw Error(Errc::Io, "http " + std::to_string(r->status) + ": " + r->body);
    return r->body;
  }
};

ApiTarget api_target(const Common& common, int port_flag) {
  ApiTarget t;
  t.host = common.config.get_or("api.host", "127.0.0.1");
  t.port = port_flag ? port_flag : static_cast<int>(common.config.get_int("api.port", 0));
  return t;
}

int run_firewall(const Common& common, const std::string& op, const std::string& rules_flag, int api_port,
                 const std::string& host, const std::string& process, std::uint64_t rule_id) {
  std::string rules = common.pick(rules_flag, "phone.firewall");
  auto api = api_target(common, api_port);
  bool remote = api.port != 0;
  if (!remote && rules.empty()) throw Error(Errc::Malformed, "need --rules or --api");
  if (op == "counters") {
    if (!remote) throw Error(Errc::Malformed, "counters need --api");
    std::cout << nlohmann::json::parse(api.call("GET", "/firewall/counters")).dump(2) << "\n";
    return kExitPass;
  }
  shoes::Firewall fw;
  if (remote)
    fw.load_json(api.call("GET", "/firewall/rules"));
  else if (std::ifstream(rules).good())
    fw.load_file(rules);
  bool changed = true;
  if (op == "block" || op == "allow") {
    if (host.empty() && process.empty()) throw Error(Errc::Malformed, "need --host and/or --process");
    shoes::Matcher m = host.empty()      ? shoes::Matcher{shoes::ProcessMatch{process}}
                       : process.empty() ? shoes::Matcher{shoes::HostMatch{host}}
                                         : shoes::Matcher{shoes::PairMatch{host, process}};
    fw.set(m, op == "block" ? shoes::Action::Block : shoes::Action::Allow);
  } else if (op == "remove") {
    if (!fw.remove(rule_id)) throw Error(Errc::Malformed, "no rule " + std::to_string(rule_id));
  } else if (op == "clear") {
    fw.clear();
  } else {
    changed = false;
  }
  if (changed) {
    if (remote)
      api.call("PUT", "/firewall/rules", fw.to_json());
    else
      fw.save_file(rules);
  }
  std::cout << fw.to_json() << "\n";
  return kExitPass;
}

int run_health(const Common& common, const std::string& op, int api_port, const std::string& type, bool tombstones,
               const std::string& uuid) {
  auto api = api_target(common, api_port);
  if (!api.port) throw Error(Errc::Malformed, "need --api");
  if (op == "harden-delete") {
    std::cout << api.call("POST", "/health/harden-delete", nlohmann::json{{"uuid", uuid}}.dump()) << "\n";
    return kExitPass;
  }
  if (op == "status") {
    std::cout << nlohmann::json::parse(api.call("GET", "/status")).dump(2) << "\n";
    return kExitPass;
  }
  std::string q = "/health/samples?tombstones=" + std::string(tombstones ? "1" : "0");
  if (!type.empty()) q += "&type=" + httplib::detail::encode_query_param(type);
  std::cout << nlohmann::json::parse(api.call("GET", q)).dump(2) << "\n";
  return kExitPass;
}

int run_provision(const std::string& dir, const std::string& watch_name, const std::string& phone_name) {
  std::filesystem::create_directories(dir);
  auto [w, p] = provision(watch_name, phone_name);
  save_identity(dir + "/watch.json", w);
  save_identity(dir + "/phone.json", p);
  std::cout << "wrote " << dir << "/watch.json and " << dir << "/phone.json\n";
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watch/phone link emulator and protocol analysis harness"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "Key/value configuration file");
  app.add_option("--identity", common.identity_path, "Identity file");

  auto* phone = app.add_subcommand("phone", "Run the phone endpoint and control API");
  std::uint16_t phone_port = 0;
  int api_port_listen = -1;
  std::string transcript, alloy_log, keylog, mode, rules;
  bool vulnerable = false;
  double run_for = 0;
  phone->add_option("--port", phone_port, "Link listener port");
  phone->add_option("--api-port", api_port_listen, "Control API port");
  phone->add_option("--transcript", transcript, "Link transcript output");
  phone->add_option("--alloy-transcript", alloy_log, "Alloy JSON-lines output");
  phone->add_option("--keylog", keylog, "Session key-log output");
  phone->add_flag("--vulnerable", vulnerable, "Honour unencrypted notifies");
  phone->add_option("--health-mode", mode, "faithful or aead");
  phone->add_option("--rules", rules, "Firewall rules file");
  phone->add_option("--run-for", run_for, "Exit after this many seconds");

  auto* watch = app.add_subcommand("watch", "Connect a watch emulator and sync");
  std::string watch_host, fetch;
  std::uint16_t watch_port = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  watch->add_option("--host", watch_host, "Phone host");
  watch->add_option("--port", watch_port, "Phone link port");
  watch->add_option("--samples", samples, "Heart-rate samples to generate and sync");
  watch->add_option("--health-mode", mode, "faithful or aead");
  watch->add_option("--fetch", fetch, "host:port to fetch through the proxy");
  watch->add_option("--seed", seed, "Sample generator seed");

  auto* scenario = app.add_subcommand("scenario", "Run a built-in scenario");
  std::string scenario_name, transcript_out, keylog_out, alloy_out;
  bool list = false, as_json = false;
  std::size_t scenario_samples = 1000;
  scenario->add_option("name", scenario_name, "Scenario name");
  scenario->add_flag("--list", list, "List scenarios");
  scenario->add_option("--seed", seed, "Seed");
  scenario->add_option("--samples", scenario_samples, "Samples for end-to-end");
  scenario->add_flag("--json", as_json, "JSON report");
  scenario->add_option("--transcript", transcript_out, "Write the link transcript here");
  scenario->add_option("--keylog", keylog_out, "Write the key-log here");
  scenario->add_option("--alloy-transcript", alloy_out, "Write Alloy JSON-lines here");

  auto* dissect_cmd = app.add_subcommand("dissect", "Dissect a link or Alloy transcript");
  std::string dissect_path, dissect_keylog;
  std::vector<std::string> dissect_ids;
  dissect_cmd->add_option("file", dissect_path, "Transcript file")->required();
  dissect_cmd->add_option("--keylog", dissect_keylog, "Key-log for decryption");
  dissect_cmd->add_option("--keys", dissect_ids, "Identity files for health envelopes");
  dissect_cmd->add_flag("--json", as_json, "JSON tree");

  auto* firewall = app.add_subcommand("firewall", "Edit firewall rules or read counters");
  std::string fw_op = "list", fw_host, fw_process;
  int api_port = 0;
  std::uint64_t rule_id = 0;
  firewall->add_option("op", fw_op, "list | block | allow | remove | clear | counters")
      ->check(CLI::IsMember({"list", "block", "allow", "remove", "clear", "counters"}));
  firewall->add_option("--rules", rules, "Rules file");
  firewall->add_option("--api", api_port, "Control API port");
  firewall->add_option("--host", fw_host, "Host glob");
  firewall->add_option("--process", fw_process, "Process name");
  firewall->add_option("--id", rule_id, "Rule id for remove");

  auto* health = app.add_subcommand("health", "Query or purge health samples");
  std::string h_op = "samples", h_type, h_uuid;
  bool tombstones = false;
  health->add_option("op", h_op, "samples | harden-delete | status")
      ->check(CLI::IsMember({"samples", "harden-delete", "status"}));
  health->add_option("--api", api_port, "Control API port");
  health->add_option("--type", h_type, "Sample type name or code");
  health->add_flag("--tombstones", tombstones, "Include tombstones");
  health->add_option("--uuid", h_uuid, "Sample uuid for harden-delete");

  auto* prov = app.add_subcommand("provision", "Create a paired watch and phone identity");
  std::string out_dir = ".", watch_name = "Watch", phone_name = "iPhone";
  prov->add_option("--out-dir", out_dir, "Directory for watch.json and phone.json");
  prov->add_option("--watch-name", watch_name);
  prov->add_option("--phone-name", phone_name);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitPass : kExitUsage;
  }

  try {
    common.load();
    if (*phone)
      return run_phone(common, phone_port, api_port_listen, transcript, alloy_log, keylog, vulnerable, mode, rules,
                       run_for);
    if (*watch) return run_watch(common, watch_host, watch_port, samples, mode, fetch, seed);
    if (*scenario)
      return run_scenario_cmd(scenario_name, list, seed, scenario_samples, as_json, transcript_out, keylog_out,
                              alloy_out);
    if (*dissect_cmd) return run_dissect(dissect_path, dissect_keylog, dissect_ids, as_json);
    if (*firewall) return run_firewall(common, fw_op, rules, api_port, fw_host, fw_process, rule_id);
    if (*health) return run_health(common, h_op, api_port, h_type, tombstones, h_uuid);
    if (*prov) return run_provision(out_dir, watch_name, phone_name);
  } catch (const Error& e) {
    std::cerr << "witchstack: " << e.what() << "\n";
    return usage_error(e.code()) ? kExitUsage : kExitFail;
  } catch (const std::exception& e) {
    std::cerr << "witchstack: " << e.what() << "\n";
    return kExitFail;
  }
  return kExitUsage;
}
