#include "witchstack/harness/control_api.hpp"

#include <httplib.h>

#include <json.hpp>
#include <map>

#include "witchstack/common/error.hpp"

namespace witchstack::harness {

using nlohmann::json;
using namespace std::chrono_literals;

namespace {

bool is_loopback(const std::string& host) {
  return host == "localhost" || host == "::1" || host.rfind("127.", 0) == 0;
}

void reply(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& what) {
  reply(res, status, json{{"error", what}}.dump());
}

int http_status(const Error& e) {
  switch (e.code()) {
    case Errc::Malformed:
    case Errc::InvalidGlob:
      return 400;
    case Errc::UnknownUuid:
      return 404;
    case Errc::StoreLocked:
      return 409;
    default:
      return 500;
  }
}

json counter_json(const shoes::TrafficCounter& c) {
  return {{"host", c.key.host},
          {"process", c.key.process},
          {"bytes_up", c.bytes_up},
          {"bytes_down", c.bytes_down},
          {"connections", c.connection_count},
          {"blocked", c.blocked_count}};
}

std::string unit_json_name(nanosync::Unit u) {
  switch (u) {
    case nanosync::Unit::Count: return "count";
    case nanosync::Unit::CountPerMinute: return "count/min";
    case nanosync::Unit::Kilocalorie: return "kcal";
    case nanosync::Unit::Meter: return "m";
    case nanosync::Unit::Second: return "s";
    case nanosync::Unit::Percent: return "%";
  }
  return "?";
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    reply_error(res, http_status(e), e.what());
  } catch (const std::exception& e) {
    reply_error(res, 400, e.what());
  }
}

}  // namespace

std::string status_json(const PhoneStatus& st) {
  json j{{"connections", st.connections},
         {"peer", st.peer_name},
         {"strict", st.strict},
         {"health_mode", st.health_mode},
         {"link_port", st.link_port},
         {"channels", st.channels},
         {"tunnels", json::array()}};
  for (const auto& t : st.tunnels) {
    json tj{{"class", std::string(1, t.protection_class)},
            {"established", t.established},
            {"suite", t.suite},
            {"strict", t.strict},
            {"esp_in", t.esp_in},
            {"esp_out", t.esp_out}};
    tj["peer_wifi"] = t.peer_wifi ? json(*t.peer_wifi) : json(nullptr);
    j["tunnels"].push_back(tj);
  }
  return j.dump();
}

std::string counters_json(const std::vector<shoes::TrafficCounter>& counters) {
  json j = json::array();
  for (const auto& c : counters) j.push_back(counter_json(c));
  return j.dump();
}

std::string samples_json(const std::vector<nanosync::StoredSample>& rows) {
  json j = json::array();
  for (const auto& s : rows) {
    json r{{"uuid", uuid_to_string(s.uuid)},
           {"type", nanosync::sample_type_name(s.sample_type)},
           {"type_code", s.sample_type},
           {"deleted", s.deleted}};
    if (s.value) r["value"] = *s.value;
    if (s.unit) r["unit"] = unit_json_name(*s.unit);
    if (s.start_ms) r["start_ms"] = *s.start_ms;
    if (s.end_ms) r["end_ms"] = *s.end_ms;
    if (s.source) r["source"] = *s.source;
    if (s.provenance) r["provenance"] = *s.provenance;
    if (s.deletion_ms) r["deletion_ms"] = *s.deletion_ms;
    j.push_back(r);
  }
  return j.dump();
}

std::string events_json(const std::vector<SecurityEvent>& events, std::size_t first_index) {
  json j = json::array();
  for (std::size_t i = first_index; i < events.size(); ++i)
    j.push_back({{"index", i},
                 {"kind", std::string(security_event_name(events[i].kind))},
                 {"detail", events[i].detail},
                 {"timestamp_us", events[i].timestamp_us}});
  return j.dump();
}

Uuid parse_uuid(const std::string& text) {
  std::string hex;
  for (char c : text)
    if (c != '-') hex += c;
  Bytes b;
  try {
    b = from_hex(hex);
  } catch (const std::exception&) {
    throw Error(Errc::Malformed, "uuid " + text);
  }
  if (b.size() != 16) throw Error(Errc::Malformed, "uuid " + text);
  Uuid u;
  std::copy(b.begin(), b.end(), u.begin());
  return u;
}

std::uint8_t parse_sample_type(const std::string& text) {
  for (int code = 0; code < 256; ++code)
    if (nanosync::sample_type_name(static_cast<std::uint8_t>(code)) == text) return static_cast<std::uint8_t>(code);
  try {
    std::size_t used = 0;
    unsigned long v = std::stoul(text, &used, 0);
    if (used == text.size() && v < 256) return static_cast<std::uint8_t>(v);
  } catch (const std::exception&) {
  }
  throw Error(Errc::Malformed, "sample type " + text);
}

ControlApi::ControlApi(PhoneEndpoint& phone, ControlApiOptions opt)
    : phone_(phone), opt_(std::move(opt)), server_(std::make_unique<httplib::Server>()) {
  if (!opt_.allow_remote && !is_loopback(opt_.host)) throw Error(Errc::Io, "refusing to bind " + opt_.host);
  routes();
  if (opt_.port == 0) {
    int p = server_->bind_to_any_port(opt_.host);
    if (p <= 0) throw Error(Errc::PortInUse, opt_.host);
    port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!server_->bind_to_port(opt_.host, opt_.port))
      throw Error(Errc::PortInUse, opt_.host + ":" + std::to_string(opt_.port));
    port_ = opt_.port;
  }
}

ControlApi::~ControlApi() { stop(); }

void ControlApi::start() {
  if (running_.exchange(true)) return;
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  poller_ = std::thread([this] { poll_counters(); });
}

void ControlApi::stop() {
  if (!running_.exchange(false)) return;
  server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (poller_.joinable()) poller_.join();
}

void ControlApi::poll_counters() {
  std::map<shoes::TrafficKey, shoes::TrafficCounter> last;
  for (const auto& c : phone_.counters().snapshot()) last[c.key] = c;
  while (running_) {
    std::this_thread::sleep_for(opt_.counter_poll);
    json deltas = json::array();
    for (const auto& c : phone_.counters().snapshot()) {
      shoes::TrafficCounter prev;
      if (auto it = last.find(c.key); it != last.end()) prev = it->second;
      if (c.bytes_up == prev.bytes_up && c.bytes_down == prev.bytes_down &&
          c.connection_count == prev.connection_count && c.blocked_count == prev.blocked_count)
        continue;
      deltas.push_back({{"host", c.key.host},
                        {"process", c.key.process},
                        {"bytes_up", c.bytes_up - prev.bytes_up},
                        {"bytes_down", c.bytes_down - prev.bytes_down},
                        {"connections", c.connection_count - prev.connection_count},
                        {"blocked", c.blocked_count - prev.blocked_count}});
      last[c.key] = c;
    }
    if (!deltas.empty()) phone_.feed().publish("counters", deltas.dump());
  }
}

void ControlApi::routes() {
  auto& s = *server_;

  s.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, status_json(phone_.status()));
  });

  s.Get("/firewall/rules", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, phone_.firewall().to_json());
  });

  s.Put("/firewall/rules", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      phone_.firewall().load_json(req.body);
      phone_.firewall_changed();
      reply(res, 200, phone_.firewall().to_json());
    });
  });

  s.Get("/firewall/counters", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, counters_json(phone_.counters().snapshot()));
  });

  s.Get("/health/samples", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      nanosync::QueryFilter f;
      if (req.has_param("type")) f.sample_type = parse_sample_type(req.get_param_value("type"));
      if (req.has_param("from")) f.from_ms = std::stoull(req.get_param_value("from"));
      if (req.has_param("to")) f.to_ms = std::stoull(req.get_param_value("to"));
      if (req.has_param("tombstones")) {
        auto v = req.get_param_value("tombstones");
        f.include_tombstones = v == "1" || v == "true";
      }
      reply(res, 200, samples_json(phone_.store()->query(f)));
    });
  });

  s.Post("/health/harden-delete", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = json::parse(req.body);
      if (!body.contains("uuid") || !body["uuid"].is_string()) throw Error(Errc::Malformed, "uuid required");
      Uuid u = parse_uuid(body["uuid"].get<std::string>());
      nanosync::QueryFilter all;
      all.include_tombstones = true;
      auto rows = phone_.store()->query(all);
      bool known = std::any_of(rows.begin(), rows.end(), [&](const auto& r) { return r.uuid == u; });
      if (!known) throw Error(Errc::UnknownUuid, uuid_to_string(u));
      phone_.store()->hardened_delete(u);
      phone_.feed().publish("samples", json{{"purged", uuid_to_string(u)}}.dump());
      reply(res, 200, json{{"purged", uuid_to_string(u)}}.dump());
    });
  });

  s.Get("/events", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::size_t since = req.has_param("since") ? std::stoull(req.get_param_value("since")) : 0;
      reply(res, 200, events_json(phone_.log()->snapshot(), since));
    });
  });

  s.Put("/settings", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = json::parse(req.body);
      if (body.contains("strict")) phone_.set_strict(body["strict"].get<bool>());
      if (body.contains("health_mode")) {
        auto m = body["health_mode"].get<std::string>();
        if (m != "faithful" && m != "aead") throw Error(Errc::Malformed, "health_mode " + m);
        phone_.set_health_mode(m == "aead" ? aoverc::Mode::AeadMitigated : aoverc::Mode::Faithful);
      }
      reply(res, 200, status_json(phone_.status()));
    });
  });

  s.Get("/stream", [this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t start = phone_.feed().last_id();
    if (req.has_param("since")) {
      try {
        start = std::stoull(req.get_param_value("since"));
      } catch (const std::exception&) {
      }
    }
    auto after = std::make_shared<std::uint64_t>(start);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, after](std::size_t, httplib::DataSink& sink) {
      if (!running_) return false;
      auto events = phone_.feed().wait_since(*after, 250ms);
      std::string out;
      for (const auto& e : events) {
        out += "id: " + std::to_string(e.id) + "\nevent: " + e.type + "\ndata: " + e.data + "\n\n";
        *after = e.id;
      }
      if (out.empty()) out = ": idle\n\n";
      return sink.write(out.data(), out.size());
    });
  });
}

}  // namespace witchstack::harness
