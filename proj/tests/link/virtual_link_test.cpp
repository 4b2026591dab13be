#include <gtest/gtest.h>

#include <thread>

#include "support/loopback.hpp"
#include "witchstack/link/virtual_link.hpp"

using namespace witchstack;
using namespace witchstack::link;
using namespace std::chrono_literals;

TEST(VirtualLink, PrefixBytesAreFreeRunningCounters) {
  auto p = witchstack::testing::link_pair();
  for (int i = 0; i < 300; ++i) p.watch->send(Bytes{static_cast<std::uint8_t>(i)});
  for (int i = 0; i < 300; ++i) {
    auto got = p.phone->receive(1s);
    ASSERT_TRUE(got);
    EXPECT_EQ((*got)[0], static_cast<std::uint8_t>(i));
  }
  p.phone->send(to_bytes("x"));
  auto rec = parse_transcript(p.transcript->snapshot());
  ASSERT_EQ(rec.records.size(), 301u);
  EXPECT_FALSE(rec.truncated);
  // 300th frame from the watch carries sequence 299 mod 256.
  EXPECT_EQ(rec.records[299].raw[0], 299 % 256);
  EXPECT_EQ(rec.records[299].direction, Direction::ToPhone);
  // Phone's first frame reports 300 received, mod 256.
  EXPECT_EQ(rec.records[300].raw[0], 0);
  EXPECT_EQ(rec.records[300].raw[1], 300 % 256);
  EXPECT_EQ(rec.records[300].direction, Direction::ToWatch);
}

TEST(VirtualLink, NrlpFragmentedAcrossLinkFrames) {
  auto p = witchstack::testing::link_pair();
  p.watch->set_max_fragment(7);
  auto frame = make_nrlp_frame(0x68, Bytes(50, 0xab));
  p.watch->send_nrlp(frame);
  NrlpStreamDecoder dec;
  std::optional<NrlpFrame> got;
  int pieces = 0;
  while (!got) {
    auto data = p.phone->receive(1s);
    ASSERT_TRUE(data);
    EXPECT_LE(data->size(), 7u);
    dec.feed(*data);
    got = dec.next();
    ++pieces;
  }
  EXPECT_EQ(*got, frame);
  EXPECT_EQ(pieces, 8);  // 55 bytes / 7
}

TEST(TranscriptFormat, RecordLayout) {
  Bytes rec = encode_transcript_record({0x0102030405060708ull, Direction::ToWatch, Bytes{9, 8, 7}});
  EXPECT_EQ(rec, (Bytes{1, 2, 3, 4, 5, 6, 7, 8, 0, 0, 0, 0, 3, 9, 8, 7}));
  auto parsed = parse_transcript(ByteView(rec).first(rec.size() - 1));
  EXPECT_TRUE(parsed.truncated);
  EXPECT_TRUE(parsed.records.empty());
}

TEST(ServiceNegotiation, AcceptedChannel) {
  auto p = witchstack::testing::link_pair();
  std::thread responder([&] { serve_service_channel(*p.phone, {"terminus"}, 2s); });
  auto ch = negotiate_service_channel(*p.watch, "terminus", 2s);
  responder.join();
  EXPECT_EQ(ch.service, "terminus");
  EXPECT_TRUE(p.watch->has_channel("terminus"));
  EXPECT_TRUE(p.phone->has_channel("terminus"));
}

TEST(ServiceNegotiation, UnknownServiceRejectedWithErrorResponse) {
  auto p = witchstack::testing::link_pair();
  std::thread responder([&] {
    try {
      serve_service_channel(*p.phone, {"terminus"}, 500ms);
    } catch (const Error&) {
    }
  });
  try {
    negotiate_service_channel(*p.watch, "bogus", 2s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ServiceRejected);
  }
  responder.join();
  auto rec = parse_transcript(p.transcript->snapshot());
  ASSERT_EQ(rec.records.size(), 2u);
  EXPECT_EQ(rec.records[1].raw[2], 0x08);
}

TEST(ServiceNegotiation, SilentResponderTimesOut) {
  auto p = witchstack::testing::link_pair();
  auto start = std::chrono::steady_clock::now();
  try {
    negotiate_service_channel(*p.watch, "terminus", 200ms);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Timeout);
  }
  EXPECT_GE(std::chrono::steady_clock::now() - start, 190ms);
}
