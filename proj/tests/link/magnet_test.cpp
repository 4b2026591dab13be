#include <gtest/gtest.h>

#include "support/random.hpp"
#include "witchstack/link/magnet.hpp"

using namespace witchstack;
using namespace witchstack::link;

TEST(Magnet, TableOpcodesRoundTrip) {
  for (std::uint8_t op : {0x03, 0x08}) {
    MagnetMessage m{op, to_bytes("terminus")};
    Bytes wire = magnet_encode(m);
    EXPECT_EQ(wire[0], op);
    EXPECT_EQ(magnet_decode(wire), m);
  }
  EXPECT_EQ(magnet_opcode_name(0x03), "create channel for service");
  EXPECT_EQ(magnet_opcode_name(0x08), "error response");
}

TEST(Magnet, UnknownOpcodeRejected) {
  try {
    magnet_decode(Bytes{0xff, 0x00});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownOpcode);
  }
}

TEST(Magnet, ExactlyTheTableIsKnown) {
  int known = 0;
  for (int op = 0; op < 256; ++op) known += is_known_magnet_opcode(static_cast<std::uint8_t>(op));
  EXPECT_EQ(known, 14);
}

TEST(MagnetProperty, RoundTripAndFuzz) {
  witchstack::testing::Gen g(3);
  const std::uint8_t ops[] = {0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07,
                              0x08, 0x09, 0x70, 0x71, 0x72, 0x90, 0x91};
  for (int i = 0; i < 1000; ++i) {
    MagnetMessage m{ops[g.uniform<std::size_t>(0, 13)], g.bytes_up_to(100)};
    ASSERT_EQ(magnet_decode(magnet_encode(m)), m);
  }
  for (int i = 0; i < 10000; ++i) {
    Bytes junk = g.bytes_up_to(20);
    try {
      auto m = magnet_decode(junk);
      if (m.opcode == 0x03) decode_channel_request(m);
      if (m.opcode == 0x04) decode_channel_accept(m);
      if (m.opcode == 0x08) decode_channel_error(m);
    } catch (const Error&) {
    }
  }
}

TEST(Magnet, NegotiationBodies) {
  auto acc = decode_channel_accept(encode_channel_accept({"terminus", 7}));
  EXPECT_EQ(acc.service, "terminus");
  EXPECT_EQ(acc.channel_id, 7);
  auto err = decode_channel_error(encode_channel_error({1, "nope"}));
  EXPECT_EQ(err.service, "nope");
}
