#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <json.hpp>
#include <thread>

#include "witchstack/common/error.hpp"
#include "witchstack/harness/control_api.hpp"
#include "witchstack/harness/tap.hpp"
#include "witchstack/harness/watch.hpp"

using namespace witchstack;
using namespace witchstack::harness;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

struct Fixture {
  std::unique_ptr<PhoneEndpoint> phone;
  std::unique_ptr<WatchEmulator> watch;
  std::unique_ptr<ControlApi> api;
  std::unique_ptr<httplib::Client> http;

  Fixture() {
    auto [w, p] = provision();
    phone = std::make_unique<PhoneEndpoint>(std::move(p), PhoneOptions{});
    phone->start();
    WatchOptions wo;
    wo.port = phone->port();
    watch = std::make_unique<WatchEmulator>(std::move(w), wo);
    watch->connect();
    phone->wait_channels(3, 2s);
    api = std::make_unique<ControlApi>(*phone);
    api->start();
    http = std::make_unique<httplib::Client>("127.0.0.1", api->port());
  }
  ~Fixture() {
    api->stop();
    watch->disconnect();
    phone->stop();
  }

  json get(const std::string& path) {
    auto r = http->Get(path);
    EXPECT_TRUE(r);
    EXPECT_EQ(r->status, 200) << path << ": " << r->body;
    return json::parse(r->body);
  }
};

shoes::ShoesRequest request_to(const std::string& host, std::uint16_t port) {
  shoes::ShoesRequest req;
  req.port = port;
  req.destination = shoes::Hostname{host};
  req.process_name = "apsd";
  return req;
}

nanosync::HealthSample sample(std::uint8_t id, double value) {
  nanosync::HealthSample s;
  s.uuid[15] = id;
  s.sample_type = nanosync::sample_type::kHeartRate;
  s.unit = nanosync::Unit::CountPerMinute;
  s.value = value;
  s.start_ms = 1700000000000ull + id;
  s.end_ms = s.start_ms + 1;
  s.source = "Watch";
  return s;
}

}  // namespace

TEST(ControlApi, StatusReportsTunnelsAndChannels) {
  Fixture f;
  auto st = f.get("/status");
  EXPECT_EQ(st["connections"], 1);
  EXPECT_EQ(st["tunnels"].size(), 2u);
  EXPECT_TRUE(st["tunnels"][0]["established"].get<bool>());
  EXPECT_EQ(st["channels"].size(), 3u);
  EXPECT_TRUE(st["strict"].get<bool>());
}

TEST(ControlApi, BlockRuleKeepsCountersAtZero) {
  Fixture f;
  EchoTap tap;
  json rules = json::array({{{"matcher", {{"host", "127.0.0.1"}}}, {"action", "block"}}});
  auto put = f.http->Put("/firewall/rules", rules.dump(), "application/json");
  ASSERT_TRUE(put);
  ASSERT_EQ(put->status, 200);
  EXPECT_EQ(f.get("/firewall/rules").size(), 1u);
  auto events_before = f.get("/events");
  auto got = f.watch->shoes_fetch(request_to("127.0.0.1", tap.port()), to_bytes("hello"));
  EXPECT_TRUE(got.reply.denied());
  std::this_thread::sleep_for(50ms);
  auto counters = f.get("/firewall/counters");
  ASSERT_EQ(counters.size(), 1u);
  EXPECT_EQ(counters[0]["bytes_up"], 0);
  EXPECT_EQ(counters[0]["bytes_down"], 0);
  EXPECT_EQ(counters[0]["blocked"], 1);
  EXPECT_EQ(tap.bytes_received(), 0u);
  EXPECT_EQ(f.get("/events"), events_before);
}

TEST(ControlApi, BadRulesAreRejected) {
  Fixture f;
  auto r = f.http->Put("/firewall/rules", "{\"not\":\"an array\"}", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  r = f.http->Put("/firewall/rules", "[{\"matcher\":{\"host\":\"[\"},\"action\":\"block\"}]", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
}

TEST(ControlApi, SamplesMatchStoreQuery) {
  Fixture f;
  f.watch->store()->insert({sample(1, 60), sample(2, 61), sample(3, 62)});
  ASSERT_TRUE(f.watch->sync_health());
  auto rows = f.get("/health/samples?type=HeartRate");
  EXPECT_EQ(rows.dump(), json::parse(samples_json(f.phone->store()->query({}))).dump());
  EXPECT_EQ(rows.size(), 3u);
  EXPECT_EQ(f.get("/health/samples?type=5&from=1700000000002").size(), 2u);
  auto bad = f.http->Get("/health/samples?type=NoSuchType");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
}

TEST(ControlApi, HardenDeletePurges) {
  Fixture f;
  f.watch->store()->insert({sample(9, 70)});
  ASSERT_TRUE(f.watch->sync_health());
  std::string id = uuid_to_string(sample(9, 70).uuid);
  auto r = f.http->Post("/health/harden-delete", json{{"uuid", id}}.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(f.get("/health/samples?tombstones=1").size(), 0u);
  r = f.http->Post("/health/harden-delete", json{{"uuid", id}}.dump(), "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 404);
  r = f.http->Post("/health/harden-delete", "{}", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
}

TEST(ControlApi, SettingsToggleModes) {
  Fixture f;
  auto r = f.http->Put("/settings", json{{"strict", false}, {"health_mode", "aead"}}.dump(), "application/json");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  auto st = f.get("/status");
  EXPECT_FALSE(st["strict"].get<bool>());
  EXPECT_EQ(st["health_mode"], "aead");
}

TEST(ControlApi, StreamDeliversCounterDeltaWithinOneSecond) {
  Fixture f;
  EchoTap tap;
  std::atomic<bool> seen{false};
  std::atomic<bool> done{false};
  std::chrono::steady_clock::time_point seen_at;
  std::thread reader([&] {
    httplib::Client c("127.0.0.1", f.api->port());
    c.set_read_timeout(5, 0);
    std::string acc;
    c.Get("/stream", [&](const char* data, std::size_t n) {
      acc.append(data, n);
      if (!seen && acc.find("event: counters") != std::string::npos) {
        seen_at = std::chrono::steady_clock::now();
        seen = true;
      }
      return !done.load();
    });
  });
  std::this_thread::sleep_for(300ms);
  auto sent = std::chrono::steady_clock::now();
  auto got = f.watch->shoes_fetch(request_to("127.0.0.1", tap.port()), to_bytes("ping"));
  EXPECT_FALSE(got.reply.denied());
  auto deadline = std::chrono::steady_clock::now() + 2s;
  while (!seen && std::chrono::steady_clock::now() < deadline) std::this_thread::sleep_for(10ms);
  done = true;
  f.api->stop();
  reader.join();
  ASSERT_TRUE(seen.load());
  EXPECT_LT(seen_at - sent, 1s);
}

TEST(ControlApi, RemoteBindRefused) {
  auto [w, p] = provision();
  PhoneEndpoint phone(std::move(p), PhoneOptions{});
  ControlApiOptions o;
  o.host = "0.0.0.0";
  EXPECT_THROW(ControlApi(phone, o), Error);
}

TEST(ControlApi, UuidAndTypeParsing) {
  Uuid u{};
  u[0] = 0xab;
  EXPECT_EQ(parse_uuid(uuid_to_string(u)), u);
  EXPECT_THROW(parse_uuid("xyz"), Error);
  EXPECT_EQ(parse_sample_type("HeartRate"), nanosync::sample_type::kHeartRate);
  EXPECT_EQ(parse_sample_type("0x0a"), 0x0a);
}
