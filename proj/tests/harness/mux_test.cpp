#include <gtest/gtest.h>

#include <condition_variable>
#include <deque>
#include <thread>

#include "support/random.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/harness/mux.hpp"

using namespace witchstack;
using namespace witchstack::harness;
using witchstack::testing::Gen;
using namespace std::chrono_literals;

namespace {

// Delivers segments on a worker thread, in order.
class Wire {
 public:
  ~Wire() {
    {
      std::lock_guard lk(mu_);
      done_ = true;
    }
    cv_.notify_all();
    if (t_.joinable()) t_.join();
  }
  void attach(std::shared_ptr<InnerMux> to) {
    to_ = to;
    t_ = std::thread([this] {
      for (;;) {
        Bytes seg;
        {
          std::unique_lock lk(mu_);
          cv_.wait(lk, [&] { return done_ || !q_.empty(); });
          if (q_.empty()) return;
          seg = std::move(q_.front());
          q_.pop_front();
        }
        if (auto m = to_.lock()) m->deliver(seg);
      }
    });
  }
  void push(Bytes b) {
    {
      std::lock_guard lk(mu_);
      q_.push_back(std::move(b));
    }
    cv_.notify_all();
  }

 private:
  std::weak_ptr<InnerMux> to_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Bytes> q_;
  bool done_ = false;
  std::thread t_;
};

struct MuxPair {
  Wire a_to_b, b_to_a;
  std::shared_ptr<InnerMux> a, b;
  MuxPair() {
    a = std::make_shared<InnerMux>([this](Bytes s) { a_to_b.push(std::move(s)); }, true);
    b = std::make_shared<InnerMux>([this](Bytes s) { b_to_a.push(std::move(s)); }, false);
    a_to_b.attach(b);
    b_to_a.attach(a);
  }
};

}  // namespace

TEST(Segment, Layout) {
  Segment s{SegmentKind::Data, 0x01020304, 61315, {0xaa, 0xbb}};
  Bytes w = encode_segment(s);
  EXPECT_EQ(w, (Bytes{0x02, 0x01, 0x02, 0x03, 0x04, 0xef, 0x83, 0xaa, 0xbb}));
  EXPECT_EQ(decode_segment(w), s);
}

TEST(Segment, RoundTripAndRejects) {
  Gen g(41);
  for (int i = 0; i < 500; ++i) {
    Segment s{static_cast<SegmentKind>(g.uniform(1, 4)), static_cast<std::uint32_t>(g.next()),
              static_cast<std::uint16_t>(g.next()), g.bytes_up_to(300)};
    EXPECT_EQ(decode_segment(encode_segment(s)), s);
  }
  EXPECT_THROW(decode_segment(Bytes{0x02, 0, 0}), Error);
  EXPECT_THROW(decode_segment(Bytes{0x09, 0, 0, 0, 1, 0, 1}), Error);
}

TEST(InnerMux, EchoOverListener) {
  MuxPair p;
  std::vector<std::thread> workers;
  std::mutex wmu;
  p.b->listen(7, [&](StreamPtr s) {
    std::lock_guard lk(wmu);
    workers.emplace_back([s] {
      for (;;) {
        Bytes b = s->read_some(4096, 5s);
        if (b.empty()) break;
        s->write(b);
      }
      s->shutdown_write();
    });
  });
  Gen g(3);
  Bytes payload = g.bytes(100000);
  auto c = p.a->open(7);
  c->write(payload);
  c->shutdown_write();
  Bytes got;
  for (;;) {
    Bytes b = c->read_some(65536, 5s);
    if (b.empty()) break;
    append(got, b);
  }
  EXPECT_EQ(got, payload);
  c->close();
  std::lock_guard lk(wmu);
  for (auto& w : workers) w.join();
}

TEST(InnerMux, ClosedPortResets) {
  MuxPair p;
  auto c = p.a->open(99);
  EXPECT_TRUE(c->read_some(10, 2s).empty());
  EXPECT_THROW(c->write(Bytes{1}), Error);
}

TEST(InnerMux, ConnectionIdsByParity) {
  MuxPair p;
  std::vector<StreamPtr> accepted;
  std::mutex mu;
  std::condition_variable cv;
  p.b->listen(1, [&](StreamPtr s) {
    std::lock_guard lk(mu);
    accepted.push_back(s);
    cv.notify_all();
  });
  p.a->listen(1, [&](StreamPtr s) {
    std::lock_guard lk(mu);
    accepted.push_back(s);
    cv.notify_all();
  });
  auto x = p.a->open(1);
  auto y = p.b->open(1);
  std::unique_lock lk(mu);
  ASSERT_TRUE(cv.wait_for(lk, 2s, [&] { return accepted.size() == 2; }));
  EXPECT_EQ(p.a->open_connections(), 2u);
  EXPECT_EQ(p.b->open_connections(), 2u);
}

TEST(InnerMux, ShutdownResetsStreams) {
  MuxPair p;
  StreamPtr server;
  std::mutex mu;
  std::condition_variable cv;
  p.b->listen(5, [&](StreamPtr s) {
    std::lock_guard lk(mu);
    server = s;
    cv.notify_all();
  });
  auto c = p.a->open(5);
  {
    std::unique_lock lk(mu);
    ASSERT_TRUE(cv.wait_for(lk, 2s, [&] { return server != nullptr; }));
  }
  p.a->shutdown();
  EXPECT_TRUE(c->read_some(1, 1s).empty());
  EXPECT_THROW(p.a->open(5), Error);
}
