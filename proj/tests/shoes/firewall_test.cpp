#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "support/random.hpp"
#include "witchstack/shoes/proxy.hpp"

using namespace witchstack;
using namespace witchstack::shoes;
using witchstack::testing::Gen;

namespace {

// Brute-force precedence: walk tiers in order, newest matching rule of the
// first tier that has one.
Action oracle(const std::vector<FirewallRule>& rules, const std::string& host,
              const std::optional<std::string>& proc, Action dflt) {
  auto simple_glob = [](const std::string& g, const std::string& h) {
    // only "*.suffix", "prefix*" and literal forms are generated
    if (g.size() > 1 && g[0] == '*') return h.size() >= g.size() - 1 && h.ends_with(g.substr(1));
    if (!g.empty() && g.back() == '*') return h.starts_with(g.substr(0, g.size() - 1));
    return g == h;
  };
  for (int tier = 0; tier < 3; ++tier) {
    const FirewallRule* best = nullptr;
    for (auto& r : rules) {
      bool hit = false;
      if (tier == 0) {
        if (auto* p = std::get_if<PairMatch>(&r.matcher))
          hit = proc && *proc == p->process && simple_glob(p->glob, host);
      } else if (tier == 1) {
        if (auto* p = std::get_if<ProcessMatch>(&r.matcher)) hit = proc && *proc == p->process;
      } else {
        if (auto* h = std::get_if<HostMatch>(&r.matcher)) hit = simple_glob(h->glob, host);
      }
      if (hit && (!best || r.id > best->id)) best = &r;
    }
    if (best) return best->action;
  }
  return dflt;
}

class EchoServer {
 public:
  EchoServer() : listener_(net::TcpListener::bind("127.0.0.1", 0)) {
    thread_ = std::thread([this] {
      while (auto s = listener_.accept()) {
        auto conn = std::move(*s);
        for (;;) {
          auto chunk = conn.read_some(4096);
          if (chunk.empty()) break;
          received_ += chunk.size();
          conn.write_all(chunk);
        }
        conn.shutdown_write();
      }
    });
  }
  ~EchoServer() {
    listener_.close();
    thread_.join();
  }
  std::uint16_t port() const { return listener_.port(); }
  std::size_t received() const { return received_; }

 private:
  net::TcpListener listener_;
  std::atomic<std::size_t> received_{0};
  std::thread thread_;
};

ShoesRequest request(const std::string& host, std::uint16_t port,
                     std::optional<std::string> proc = std::nullopt,
                     std::optional<std::uint8_t> cond = std::nullopt) {
  ShoesRequest r;
  r.port = port;
  r.destination = Hostname{host};
  r.process_name = std::move(proc);
  r.condition_flags = cond;
  return r;
}

struct Rig {
  Firewall fw;
  TrafficCounters counters;
  NetworkState network{netflag::kWifi};
  std::size_t dialed_bytes = 0;
  std::uint16_t echo_port;
  ShoesProxy proxy;

  explicit Rig(std::uint16_t echo)
      : echo_port(echo),
        proxy(fw, counters, network, [this](const std::string&, std::uint16_t) -> StreamPtr {
          return std::make_shared<TcpByteStream>(net::TcpStream::connect("127.0.0.1", echo_port));
        }) {}

  // Runs one exchange; returns reply and echoed bytes.
  std::pair<ShoesReply, Bytes> exchange(const ShoesRequest& req, const Bytes& payload,
                                         ProxyOutcome* outcome = nullptr) {
    auto [client, server] = make_pipe();
    std::thread t([&, server = server] {
      auto o = proxy.handle(server);
      if (outcome) *outcome = o;
    });
    client->write(shoes_encode_request(req));
    auto reply_bytes = client->read_exact(kReplySize, std::chrono::seconds(5));
    EXPECT_TRUE(reply_bytes);
    auto reply = shoes_decode_reply(*reply_bytes);
    Bytes echoed;
    if (!reply.denied()) {
      client->write(payload);
      client->shutdown_write();
      for (;;) {
        auto chunk = client->read_some(4096, std::chrono::seconds(5));
        if (chunk.empty()) break;
        append(echoed, chunk);
      }
    } else {
      try {
        client->write(payload);
      } catch (const Error&) {
      }
    }
    t.join();
    return {reply, echoed};
  }
};

}  // namespace

TEST(Glob, Matching) {
  EXPECT_TRUE(glob_match("*.analytics.example", "a.analytics.example"));
  EXPECT_FALSE(glob_match("*.analytics.example", "analytics.example"));
  EXPECT_TRUE(glob_match("TRACKER.example", "tracker.EXAMPLE"));
  EXPECT_TRUE(glob_match("api?.x.com", "api1.x.com"));
  EXPECT_FALSE(glob_match("api?.x.com", "api.x.com"));
  EXPECT_TRUE(glob_match("*", ""));
  EXPECT_TRUE(glob_match("a*b*c", "axxbyyc"));
  EXPECT_FALSE(glob_match("a*b*c", "axxbyy"));
}

TEST(Glob, Invalid) {
  for (std::string g : {"", "bad host", "a/b", "[x]"}) {
    try {
      validate_glob(g);
      FAIL() << g;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidGlob);
    }
  }
  Firewall fw;
  EXPECT_THROW(fw.set(HostMatch{"a b"}, Action::Block), Error);
  EXPECT_THROW(fw.set(ProcessMatch{""}, Action::Block), Error);
}

TEST(Firewall, GlobBlock) {
  Firewall fw;
  fw.set(HostMatch{"*.analytics.example"}, Action::Block);
  EXPECT_EQ(fw.evaluate("a.analytics.example", std::nullopt).action, Action::Block);
  EXPECT_EQ(fw.evaluate("example.org", std::nullopt).action, Action::Allow);
}

TEST(Firewall, ProcessBeatsHostPairBeatsBoth) {
  Firewall fw;
  fw.set(ProcessMatch{"outcast"}, Action::Block);
  fw.set(HostMatch{"feed.example"}, Action::Allow);
  auto d = fw.evaluate("feed.example", "outcast");
  EXPECT_EQ(d.action, Action::Block);
  EXPECT_EQ(d.tier, Tier::Process);
  fw.set(PairMatch{"feed.example", "outcast"}, Action::Allow);
  d = fw.evaluate("feed.example", "outcast");
  EXPECT_EQ(d.action, Action::Allow);
  EXPECT_EQ(d.tier, Tier::Pair);
  EXPECT_EQ(fw.evaluate("other.example", "outcast").action, Action::Block);
  EXPECT_EQ(fw.evaluate("x", std::nullopt).tier, Tier::Default);
}

TEST(Firewall, SameMatcherReplaces) {
  Firewall fw;
  fw.set(HostMatch{"h"}, Action::Block);
  fw.set(HostMatch{"h"}, Action::Allow);
  ASSERT_EQ(fw.list().size(), 1u);
  EXPECT_EQ(fw.evaluate("h", std::nullopt).action, Action::Allow);
  EXPECT_TRUE(fw.remove(fw.list()[0].id));
  EXPECT_FALSE(fw.remove(999));
}

TEST(Firewall, PrecedenceMatchesBruteForce) {
  Gen g(41);
  const std::vector<std::string> hosts{"a.example", "b.example", "x.tracker.net", "tracker.net", "cdn.io"};
  const std::vector<std::string> globs{"*.example", "a.*", "*.tracker.net", "tracker.net", "cdn.io", "*"};
  const std::vector<std::string> procs{"weatherd", "outcast", "mail"};
  for (int trial = 0; trial < 300; ++trial) {
    Firewall fw(g.coin() ? Action::Allow : Action::Block);
    for (int k = g.uniform<int>(0, 8); k > 0; --k) {
      auto a = g.coin() ? Action::Allow : Action::Block;
      switch (g.uniform<int>(0, 2)) {
        case 0: fw.set(HostMatch{globs[g.uniform<std::size_t>(0, globs.size() - 1)]}, a); break;
        case 1: fw.set(ProcessMatch{procs[g.uniform<std::size_t>(0, procs.size() - 1)]}, a); break;
        default:
          fw.set(PairMatch{globs[g.uniform<std::size_t>(0, globs.size() - 1)],
                           procs[g.uniform<std::size_t>(0, procs.size() - 1)]},
                 a);
      }
    }
    auto rules = fw.list();
    for (auto& h : hosts) {
      for (int p = -1; p < static_cast<int>(procs.size()); ++p) {
        std::optional<std::string> proc;
        if (p >= 0) proc = procs[static_cast<std::size_t>(p)];
        ASSERT_EQ(fw.evaluate(h, proc).action, oracle(rules, h, proc, fw.default_action()));
      }
    }
  }
}

TEST(Firewall, JsonPersistence) {
  Firewall fw;
  fw.set(HostMatch{"*.ads.example"}, Action::Block);
  fw.set(ProcessMatch{"outcast"}, Action::Block);
  fw.set(PairMatch{"feed.example", "outcast"}, Action::Allow);
  auto path = (std::filesystem::temp_directory_path() / "ws_rules.json").string();
  fw.save_file(path);
  Firewall again;
  again.load_file(path);
  ASSERT_EQ(again.list().size(), 3u);
  EXPECT_EQ(again.evaluate("feed.example", "outcast").action, Action::Allow);
  EXPECT_EQ(again.evaluate("x.ads.example", std::nullopt).action, Action::Block);
  std::filesystem::remove(path);
  EXPECT_THROW(again.load_json("{}"), Error);
  EXPECT_THROW(again.load_json(R"([{"matcher":{"host":"bad glob"},"action":"block"}])"), Error);
  EXPECT_THROW(again.load_json(R"([{"matcher":{},"action":"block"}])"), Error);
  EXPECT_THROW(again.load_json(R"([{"matcher":{"host":"h"},"action":"maybe"}])"), Error);
}

TEST(Conditions, BulkOnCellular) {
  EXPECT_TRUE(conditions_satisfied(std::nullopt, netflag::kCellular | netflag::kExpensive));
  EXPECT_TRUE(conditions_satisfied(netflag::kWifi, netflag::kWifi));
  EXPECT_FALSE(conditions_satisfied(netflag::kWifi, netflag::kCellular | netflag::kExpensive));
  EXPECT_TRUE(conditions_satisfied(netflag::kWifi | netflag::kCellular | netflag::kExpensive,
                                   netflag::kCellular | netflag::kExpensive));
  EXPECT_FALSE(conditions_satisfied(netflag::kWifi | netflag::kCellular, netflag::kCellular | netflag::kExpensive));
}

TEST(ShoesProxy, AllowedEchoAndCounters) {
  EchoServer echo;
  Rig rig(echo.port());
  Bytes payload(1000);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(i * 7);
  ProxyOutcome out;
  auto [reply, echoed] = rig.exchange(request("feed.example", 443, "weatherd"), payload, &out);
  EXPECT_FALSE(reply.denied());
  EXPECT_EQ(reply.network_info_flags, 0x20);
  EXPECT_EQ(echoed, payload);
  auto c = rig.counters.get({"feed.example", "weatherd"});
  ASSERT_TRUE(c);
  EXPECT_EQ(c->bytes_up, 1000u);
  EXPECT_EQ(c->bytes_down, 1000u);
  EXPECT_EQ(c->connection_count, 1u);
  EXPECT_EQ(echo.received(), 1000u);
  EXPECT_EQ(out.bytes_up, 1000u);
  EXPECT_FALSE(out.error);
}

TEST(ShoesProxy, BlockedSendsNothing) {
  EchoServer echo;
  Rig rig(echo.port());
  rig.fw.set(HostMatch{"tracker.example"}, Action::Block);
  ProxyOutcome out;
  auto [reply, echoed] = rig.exchange(request("tracker.example", 443), Bytes(500, 1), &out);
  EXPECT_TRUE(reply.denied());
  EXPECT_EQ(reply.network_info_flags, 0x08);
  EXPECT_EQ(reply.code, code::kFirewall);
  EXPECT_EQ(out.error, Errc::FirewallBlocked);
  EXPECT_TRUE(echoed.empty());
  EXPECT_EQ(echo.received(), 0u);
  auto c = rig.counters.get({"tracker.example", ""});
  ASSERT_TRUE(c);
  EXPECT_EQ(c->bytes_up, 0u);
  EXPECT_EQ(c->blocked_count, 1u);
}

TEST(ShoesProxy, ConditionUnsatisfied) {
  EchoServer echo;
  Rig rig(echo.port());
  rig.network.set(netflag::kCellular | netflag::kExpensive);
  ProxyOutcome out;
  auto [reply, echoed] = rig.exchange(request("cdn.example", 443, "bulkd", netflag::kWifi), Bytes(10, 2), &out);
  EXPECT_TRUE(reply.denied());
  EXPECT_EQ(reply.code, code::kConditions);
  EXPECT_EQ(out.error, Errc::ConditionUnsatisfied);
  EXPECT_EQ(echo.received(), 0u);

  auto [ok, back] = rig.exchange(request("weather.example", 443, "weatherd",
                                         netflag::kWifi | netflag::kCellular | netflag::kExpensive),
                                 Bytes(10, 3));
  EXPECT_FALSE(ok.denied());
  EXPECT_EQ(ok.network_info_flags, 0xC0);
  EXPECT_EQ(back, Bytes(10, 3));
}

TEST(ShoesProxy, DialFailure) {
  Firewall fw;
  TrafficCounters counters;
  NetworkState net;
  ShoesProxy proxy(fw, counters, net, [](const std::string&, std::uint16_t) -> StreamPtr {
    throw Error(Errc::ConnectFailure, "unreachable");
  });
  auto [client, server] = make_pipe();
  client->write(shoes_encode_request(request("down.example", 1)));
  auto out = proxy.handle(server);
  EXPECT_EQ(out.error, Errc::DialFailure);
  auto reply = shoes_decode_reply(*client->read_exact(kReplySize));
  EXPECT_EQ(reply.code, code::kDialFailure);
  EXPECT_TRUE(reply.denied());
}

TEST(ShoesProxy, MalformedAndBonjourGetFixedSizeDenial) {
  Firewall fw;
  TrafficCounters counters;
  NetworkState net;
  ShoesProxy proxy(fw, counters, net, [](const std::string&, std::uint16_t) -> StreamPtr { return nullptr; });
  {
    auto [client, server] = make_pipe();
    client->write(Bytes{0x00, 0x03, 0x09, 0x00, 0x01});
    auto out = proxy.handle(server);
    EXPECT_EQ(out.error, Errc::UnknownRequestType);
    auto reply = client->read_exact(kReplySize);
    ASSERT_TRUE(reply);
    EXPECT_TRUE(shoes_decode_reply(*reply).denied());
  }
  {
    ShoesRequest r;
    r.port = 5;
    r.destination = Bonjour{"printer._ipp._tcp.local"};
    auto [client, server] = make_pipe();
    client->write(shoes_encode_request(r));
    auto out = proxy.handle(server);
    EXPECT_EQ(out.error, Errc::UnknownRequestType);
    EXPECT_EQ(shoes_decode_reply(*client->read_exact(kReplySize)).code, code::kUnsupported);
  }
}

TEST(ShoesProxy, RuleChangeAffectsNextConnectionOnly) {
  EchoServer echo;
  Rig rig(echo.port());
  auto [client, server] = make_pipe();
  std::thread t([&, server = server] { rig.proxy.handle(server); });
  client->write(shoes_encode_request(request("live.example", 443)));
  auto reply = shoes_decode_reply(*client->read_exact(kReplySize, std::chrono::seconds(5)));
  ASSERT_FALSE(reply.denied());
  rig.fw.set(HostMatch{"live.example"}, Action::Block);
  client->write(Bytes(100, 9));
  auto back = client->read_exact(100, std::chrono::seconds(5));
  ASSERT_TRUE(back);
  client->shutdown_write();
  while (!client->read_some(4096, std::chrono::seconds(5)).empty()) {
  }
  t.join();
  auto [next, none] = rig.exchange(request("live.example", 443), Bytes(5, 1));
  EXPECT_TRUE(next.denied());
}

TEST(ShoesProxy, CounterConservation) {
  EchoServer echo;
  Rig rig(echo.port());
  Gen g(42);
  std::size_t sent = 0;
  const std::vector<std::string> procs{"a", "b", "c"};
  for (int i = 0; i < 12; ++i) {
    auto n = g.uniform<std::size_t>(1, 5000);
    auto [reply, back] = rig.exchange(request("h" + std::to_string(i % 4) + ".example", 80,
                                              procs[static_cast<std::size_t>(i) % 3]),
                                      g.bytes(n));
    ASSERT_EQ(back.size(), n);
    sent += n;
  }
  std::uint64_t up = 0, down = 0;
  for (auto& c : rig.counters.snapshot()) {
    up += c.bytes_up;
    down += c.bytes_down;
  }
  EXPECT_EQ(up, sent);
  EXPECT_EQ(down, sent);
  EXPECT_EQ(echo.received(), sent);
}
