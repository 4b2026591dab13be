#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "support/loopback.hpp"
#include "support/random.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/harness/engine.hpp"

using namespace witchstack;
using namespace witchstack::harness;
using ike::ProtectionClass;
using witchstack::testing::Gen;
using namespace std::chrono_literals;

namespace {

const ike::DeviceIdentity& watch_id() {
  static const auto id = ike::DeviceIdentity::generate("Watch", "21S364");
  return id;
}
const ike::DeviceIdentity& phone_id() {
  static const auto id = ike::DeviceIdentity::generate("Phone", "21E236");
  return id;
}

struct EnginePair {
  std::shared_ptr<link::TranscriptWriter> transcript;
  std::shared_ptr<SecurityLog> phone_log = std::make_shared<SecurityLog>();
  std::shared_ptr<KeyLog> keylog = std::make_shared<KeyLog>();
  std::unique_ptr<LinkEngine> watch, phone;
};

std::unique_ptr<EnginePair> make_pair(std::function<void(EngineOptions&, EngineOptions&)> tweak = {}) {
  auto p = std::make_unique<EnginePair>();
  auto links = witchstack::testing::link_pair();
  p->transcript = links.transcript;
  EngineOptions wo, po;
  wo.initiator = true;
  po.log = p->phone_log;
  wo.keylog = p->keylog;
  wo.run_keepalive = po.run_keepalive = false;
  if (tweak) tweak(wo, po);
  p->watch = std::make_unique<LinkEngine>(std::move(links.watch), watch_id(),
                                          ike::PeerKeys::of(phone_id()), wo);
  p->phone = std::make_unique<LinkEngine>(std::move(links.phone), phone_id(),
                                          ike::PeerKeys::of(watch_id()), po);
  p->phone->start();
  p->watch->start();
  p->watch->establish();
  EXPECT_TRUE(p->phone->wait_established(2s));
  return p;
}

void serve_echo(LinkEngine& e, ProtectionClass c, std::uint16_t port,
                std::vector<std::thread>& threads, std::mutex& mu) {
  e.listen(c, port, [&threads, &mu](StreamPtr s) {
    std::lock_guard lk(mu);
    threads.emplace_back([s] {
      try {
        for (;;) {
          Bytes b = s->read_some(8192, 5s);
          if (b.empty()) break;
          s->write(b);
        }
        s->shutdown_write();
      } catch (const Error&) {
      }
    });
  });
}

Bytes drain(ByteStream& s) {
  Bytes out;
  for (;;) {
    Bytes b = s.read_some(65536, 5s);
    if (b.empty()) return out;
    append(out, b);
  }
}

}  // namespace

TEST(LinkEngine, EstablishesBothClasses) {
  auto p = make_pair();
  for (auto c : {ProtectionClass::C, ProtectionClass::D}) {
    EXPECT_TRUE(p->watch->established(c));
    EXPECT_TRUE(p->phone->established(c));
    auto hw = p->watch->handshake(c), hp = p->phone->handshake(c);
    ASSERT_TRUE(hw && hp);
    EXPECT_EQ(hw->spi_i, hp->spi_i);
    EXPECT_EQ(hw->spi_r, hp->spi_r);
    EXPECT_TRUE(hw->initiator);
    EXPECT_FALSE(hp->initiator);
  }
  EXPECT_EQ(p->keylog->entries().size(), 2u);
}

TEST(LinkEngine, StreamsInBothClasses) {
  auto p = make_pair();
  std::vector<std::thread> threads;
  std::mutex mu;
  serve_echo(*p->phone, ProtectionClass::C, 10, threads, mu);
  serve_echo(*p->phone, ProtectionClass::D, 20, threads, mu);
  Gen g(9);
  for (auto [c, port] : {std::pair{ProtectionClass::C, 10}, std::pair{ProtectionClass::D, 20}}) {
    Bytes data = g.bytes(70000);
    auto s = p->watch->open(c, static_cast<std::uint16_t>(port));
    s->write(data);
    s->shutdown_write();
    EXPECT_EQ(drain(*s), data);
    s->close();
  }
  auto st = p->watch->stats();
  EXPECT_GT(st.esp_out, 0u);
  EXPECT_GT(st.esp_in, 0u);
  EXPECT_EQ(st.esp_dropped, 0u);
  p->watch->stop();
  p->phone->stop();
  std::lock_guard lk(mu);
  for (auto& t : threads) t.join();
}

TEST(LinkEngine, ConcurrentStreamsStayOrdered) {
  auto p = make_pair();
  std::vector<std::thread> threads;
  std::mutex mu;
  serve_echo(*p->phone, ProtectionClass::C, 10, threads, mu);
  std::vector<std::future<bool>> done;
  for (int i = 0; i < 8; ++i)
    done.push_back(std::async(std::launch::async, [&, i] {
      Gen g(100 + i);
      Bytes data = g.bytes(20000 + i * 997);
      auto s = p->watch->open(ProtectionClass::C, 10);
      for (std::size_t off = 0; off < data.size(); off += 1500)
        s->write(ByteView(data).subspan(off, std::min<std::size_t>(1500, data.size() - off)));
      s->shutdown_write();
      return drain(*s) == data;
    }));
  for (auto& f : done) EXPECT_TRUE(f.get());
  p->watch->stop();
  p->phone->stop();
  std::lock_guard lk(mu);
  for (auto& t : threads) t.join();
}

TEST(LinkEngine, KeepaliveAnswered) {
  auto p = make_pair();
  for (int i = 0; i < 5; ++i) {
    EXPECT_TRUE(p->watch->keepalive_now(ProtectionClass::C));
    std::this_thread::sleep_for(20ms);
  }
  EXPECT_TRUE(p->watch->established(ProtectionClass::C));
}

TEST(LinkEngine, UnansweredKeepalivesTakeSessionDown) {
  auto p = make_pair();
  std::vector<std::thread> threads;
  std::mutex mu;
  serve_echo(*p->phone, ProtectionClass::D, 20, threads, mu);
  auto s = p->watch->open(ProtectionClass::D, 20);
  p->phone->stop();
  int ok = 0;
  while (p->watch->keepalive_now(ProtectionClass::D)) ++ok;
  EXPECT_EQ(ok, 3);
  EXPECT_FALSE(p->watch->established(ProtectionClass::D));
  EXPECT_TRUE(s->read_some(10, 1s).empty());
  EXPECT_THROW(p->watch->open(ProtectionClass::D, 20), Error);
  std::lock_guard lk(mu);
  for (auto& t : threads) t.join();
}

TEST(LinkEngine, WifiAddressRoutesToDatagrams) {
  std::uint16_t port;
  {
    auto probe = net::UdpSocket::bind("127.0.0.1", 0);
    port = probe.port();
  }
  auto p = make_pair([&](EngineOptions& wo, EngineOptions& po) {
    wo.local_wifi = ike::WifiAddress::v4(127, 0, 0, 1, port);
    po.wifi_routing = true;
  });
  auto st = p->phone->notify_state(ProtectionClass::D);
  ASSERT_TRUE(st && st->peer_wifi);
  EXPECT_EQ(st->peer_wifi->port, port);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(p->phone->keepalive_now(ProtectionClass::D));
  for (int i = 0; i < 100 && p->watch->stats().wifi_in < 4; ++i) std::this_thread::sleep_for(10ms);
  EXPECT_EQ(p->phone->stats().wifi_out, 4u);
  EXPECT_EQ(p->watch->stats().wifi_in, 4u);
  EXPECT_TRUE(p->phone->established(ProtectionClass::D));
}

TEST(LinkEngine, RejectsWrongPeerKeys) {
  auto links = witchstack::testing::link_pair();
  auto stranger = ike::DeviceIdentity::generate("Other", "1");
  EngineOptions wo, po;
  wo.initiator = true;
  wo.handshake_timeout = 1s;
  po.handshake_timeout = 1s;
  wo.run_keepalive = po.run_keepalive = false;
  LinkEngine w(std::move(links.watch), stranger, ike::PeerKeys::of(phone_id()), wo);
  LinkEngine ph(std::move(links.phone), phone_id(), ike::PeerKeys::of(watch_id()), po);
  ph.start();
  w.start();
  try {
    w.establish();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::HandshakeFailure);
  }
  EXPECT_FALSE(ph.established(ProtectionClass::C));
}

TEST(KeyLog, LineRoundTrip) {
  Gen g(5);
  for (int i = 0; i < 50; ++i) {
    KeyLogEntry e;
    e.protection_class = g.coin() ? ProtectionClass::C : ProtectionClass::D;
    e.suite = g.coin() ? ike::EncrAlg::AesGcm16_256 : ike::EncrAlg::ChaCha20Poly1305;
    e.spi_i = g.next();
    e.spi_r = g.next();
    for (auto* k : {&e.keys.esp_i2r, &e.keys.esp_r2i, &e.keys.ike_i2r, &e.keys.ike_r2i})
      *k = {g.bytes(32), g.bytes(4)};
    auto back = parse_keylog_line(format_keylog_line(e));
    ASSERT_TRUE(back);
    EXPECT_EQ(format_keylog_line(*back), format_keylog_line(e));
  }
  EXPECT_FALSE(parse_keylog_line(""));
  EXPECT_FALSE(parse_keylog_line("45 20 0 0 a:b c:d e:f 0:1"));
}

TEST(KeyLog, FileAppendAndLoad) {
  std::string path = ::testing::TempDir() + "keylog_test.txt";
  std::remove(path.c_str());
  {
    KeyLog log(path);
    KeyLogEntry e;
    e.spi_i = 1;
    e.spi_r = 2;
    for (auto* k : {&e.keys.esp_i2r, &e.keys.esp_r2i, &e.keys.ike_i2r, &e.keys.ike_r2i})
      *k = {Bytes(32, 7), Bytes(4, 1)};
    log.add(e);
    log.add(e);
    e.spi_i = 3;
    log.add(e);
  }
  auto loaded = KeyLog::load(path);
  EXPECT_EQ(loaded->entries().size(), 2u);
  EXPECT_TRUE(loaded->find(3, 2));
  EXPECT_THROW(KeyLog::load(path + ".missing"), Error);
}
