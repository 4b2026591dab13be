#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "support/random.hpp"
#include "witchstack/alloy/message.hpp"
#include "witchstack/alloy/nwsc.hpp"
#include "witchstack/alloy/session.hpp"
#include "witchstack/common/error.hpp"

using namespace witchstack;
using namespace witchstack::alloy;
using namespace std::chrono_literals;
using witchstack::testing::Gen;

namespace {

ControlOptions options(Role role, std::vector<ChannelDescriptor> ch, std::string version = "1.0") {
  ControlOptions o;
  o.role = role;
  o.hello.version = version;
  o.hello.device_id = role == Role::Watch ? "watch-1" : "phone-1";
  o.hello.features = 0x3;
  o.channels = std::move(ch);
  o.hello_timeout = 2000ms;
  return o;
}

template <typename F>
bool eventually(F f, std::chrono::milliseconds limit = 2000ms) {
  auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (f()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return f();
}

}  // namespace

TEST(AlloyControl, TableNamesAndNumbers) {
  const char* names[] = {"Hello", "SetupChannel", "CloseChannel", "CompressionRequest",
                         "CompressionResponse", "SetupEncryptedChannel", "FairplayHostSessionInfo",
                         "FairplayDeviceInfo", "FairplayDeviceSessionInfo", "OTRNegotiationMessage",
                         "EncryptControlChannel", "SuspendOTRNegotiationMsg"};
  for (int t = 1; t <= 12; ++t) {
    EXPECT_EQ(control_type_name(static_cast<std::uint8_t>(t)), names[t - 1]);
    EXPECT_TRUE(is_table_control_type(static_cast<std::uint8_t>(t)));
  }
  EXPECT_FALSE(is_table_control_type(0));
  EXPECT_FALSE(is_table_control_type(13));
}

TEST(AlloyControl, ChannelDescriptorDefaults) {
  auto d = make_descriptor('C', Urgency::Urgent);
  EXPECT_EQ(d.account, "idstest");
  EXPECT_EQ(d.service, "localdelivery");
  EXPECT_EQ(d.name, "UTunDelivery-Default-Urgent-C");
  EXPECT_EQ(d.tcp_port, 61314);
  EXPECT_EQ(channel_name('D', Urgency::Default), "UTunDelivery-Default-Default-D");
  EXPECT_EQ(decode_setup(encode_setup(d)), d);
}

TEST(AlloyControl, BodiesRoundTrip) {
  Gen g(1);
  for (int i = 0; i < 1000; ++i) {
    Hello h{g.ascii(5), g.ascii(g.uniform<std::size_t>(0, 30)), static_cast<std::uint32_t>(g.next()),
            g.uniform<std::uint16_t>(0, 9)};
    ASSERT_EQ(decode_hello(encode_hello(h)), h);
    ChannelDescriptor d = make_descriptor(g.coin() ? 'C' : 'D', g.coin() ? Urgency::Urgent : Urgency::Default);
    d.tcp_port = g.uniform<std::uint16_t>(1, 65535);
    ASSERT_EQ(decode_setup(encode_setup(d)), d);
    ControlMessage m{g.uniform<std::uint8_t>(1, 12), g.bytes_up_to(50)};
    ASSERT_EQ(control_decode(control_encode(m)), m);
  }
  for (int i = 0; i < 10000; ++i) {
    Bytes b = g.bytes_up_to(60);
    try { decode_hello(b); } catch (const Error&) {}
    try { decode_setup(b); } catch (const Error&) {}
    try { control_decode(b); } catch (const Error&) {}
    try { decode_preamble(b); } catch (const Error&) {}
  }
}

TEST(AlloyControl, BothRequestSameChannelGivesOne) {
  auto [w, p] = make_pipe();
  auto wd = make_descriptor('C', Urgency::Default);
  auto pd = make_descriptor('C', Urgency::Default);
  auto fut = std::async(std::launch::async, [&] { return ControlSession::connect(p, options(Role::Phone, {pd})); });
  auto watch = ControlSession::connect(w, options(Role::Watch, {wd}));
  auto phone = fut.get();
  EXPECT_EQ(watch->peer_hello().device_id, "phone-1");
  EXPECT_EQ(phone->peer_hello().setup_count, 1);
  auto open = watch->channels_to_open();
  ASSERT_EQ(open.size(), 1u);
  EXPECT_EQ(open[0].name, "UTunDelivery-Default-Default-C");
  EXPECT_EQ(open[0].channel_uuid, wd.channel_uuid);
  EXPECT_EQ(open[0].tcp_port, kDataPort);
}

TEST(AlloyControl, UnionOfDistinctChannels) {
  auto c = make_descriptor('C', Urgency::Default);
  auto u = make_descriptor('C', Urgency::Urgent);
  auto d = make_descriptor('D', Urgency::Default);
  auto m = merge_channels({c, u}, {make_descriptor('C', Urgency::Default), d});
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m[0], c);
  EXPECT_EQ(m[1], u);
  EXPECT_EQ(m[2], d);
}

TEST(AlloyControl, UnsupportedTypesAnsweredSessionContinues) {
  auto [w, p] = make_pipe();
  auto fut = std::async(std::launch::async, [&] { return ControlSession::connect(p, options(Role::Phone, {})); });
  auto watch = ControlSession::connect(w, options(Role::Watch, {}));
  auto phone = fut.get();
  watch->start();
  phone->start();
  for (std::uint8_t t = 4; t <= 12; ++t) watch->send_raw({t, {0x01}});
  EXPECT_TRUE(eventually([&] { return watch->unsupported_received() == 9; }));
  EXPECT_EQ(phone->unsupported_sent(), 9);
  // still usable afterwards
  std::promise<ChannelDescriptor> got;
  phone->set_on_setup([&](const ChannelDescriptor& d) { got.set_value(d); });
  auto d = make_descriptor('D', Urgency::Urgent);
  watch->setup_channel(d);
  auto f = got.get_future();
  ASSERT_EQ(f.wait_for(2s), std::future_status::ready);
  EXPECT_EQ(f.get(), d);
  EXPECT_TRUE(phone->alive());
}

TEST(AlloyControl, CloseChannelTearsDownAndReopens) {
  auto [w, p] = make_pipe();
  auto d = make_descriptor('C', Urgency::Default);
  auto fut = std::async(std::launch::async, [&] { return ControlSession::connect(p, options(Role::Phone, {})); });
  auto watch = ControlSession::connect(w, options(Role::Watch, {d}));
  auto phone = fut.get();
  NwscAcceptor acceptor;
  for (const auto& x : phone->remote_channels()) acceptor.announce(x);
  std::atomic<int> closes{0};
  phone->set_on_close([&](const Uuid& u) {
    acceptor.release(u);
    ++closes;
  });
  phone->set_on_setup([&](const ChannelDescriptor& x) { acceptor.announce(x); });
  phone->start();
  watch->start();

  auto open_once = [&] {
    auto [a, b] = make_pipe();
    auto acc = std::async(std::launch::async, [&, b = b] { return acceptor.accept(*b); });
    nwsc_open(*a, d);
    return acc.get();
  };
  EXPECT_EQ(open_once().channel_uuid, d.channel_uuid);
  EXPECT_TRUE(acceptor.is_open(d.channel_uuid));
  watch->close_channel(d.channel_uuid);
  EXPECT_TRUE(eventually([&] { return closes == 1; }));
  EXPECT_FALSE(acceptor.is_open(d.channel_uuid));
  EXPECT_TRUE(phone->remote_channels().empty());
  watch->setup_channel(d);
  EXPECT_TRUE(eventually([&] { return phone->remote_channels().size() == 1; }));
  EXPECT_EQ(open_once().name, d.name);
}

TEST(AlloyControl, HelloTimeout) {
  auto [w, p] = make_pipe();
  auto o = options(Role::Watch, {});
  o.hello_timeout = 100ms;
  try {
    ControlSession::connect(w, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::HelloTimeout);
  }
}

TEST(AlloyControl, IncompatibleMajorVersion) {
  auto [w, p] = make_pipe();
  auto fut = std::async(std::launch::async, [&] {
    try {
      ControlSession::connect(p, options(Role::Phone, {}, "2.0"));
    } catch (const Error&) {
    }
  });
  try {
    ControlSession::connect(w, options(Role::Watch, {}, "1.3"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IncompatibleVersion);
  }
  fut.get();
}

TEST(AlloyControl, MinorVersionDifferenceAccepted) {
  auto [w, p] = make_pipe();
  auto fut = std::async(std::launch::async, [&] { return ControlSession::connect(p, options(Role::Phone, {}, "1.9")); });
  EXPECT_NO_THROW(ControlSession::connect(w, options(Role::Watch, {}, "1.0")));
  fut.get();
}

TEST(Nwsc, PreambleLayout) {
  NwscPreamble p{"UTunDelivery-Default-Default-C", {}};
  p.channel_uuid[0] = 0xAB;
  Bytes b = encode_preamble(p);
  ASSERT_EQ(b.size(), 1 + p.name.size() + 16);
  EXPECT_EQ(b[0], p.name.size());
  EXPECT_EQ(b[1 + p.name.size()], 0xAB);
  EXPECT_EQ(decode_preamble(b), p);
}

TEST(Nwsc, AcceptRejectDuplicate) {
  NwscAcceptor acc;
  auto d = make_descriptor('C', Urgency::Default);
  acc.announce(d);
  auto attempt = [&](const ChannelDescriptor& x) -> std::pair<std::optional<Errc>, Bytes> {
    auto [a, b] = make_pipe();
    std::optional<Errc> err;
    auto fut = std::async(std::launch::async, [&, b = b] {
      try {
        acc.accept(*b);
      } catch (const Error& e) {
        err = e.code();
      }
    });
    a->write(encode_preamble({x.name, x.channel_uuid}));
    auto reply = a->read_exact(1, 2000ms);
    fut.get();
    return {err, reply.value_or(Bytes{})};
  };
  auto ok = attempt(d);
  EXPECT_FALSE(ok.first);
  EXPECT_EQ(ok.second, Bytes{0x01});

  auto unknown = make_descriptor('D', Urgency::Default);
  auto bad = attempt(unknown);
  EXPECT_EQ(bad.first, Errc::UnknownChannel);
  EXPECT_EQ(bad.second, Bytes{0x00});

  auto dup = attempt(d);
  EXPECT_EQ(dup.first, Errc::DuplicateOpen);
  EXPECT_EQ(dup.second, Bytes{0x00});

  ChannelDescriptor renamed = d;
  renamed.name = "other";
  acc.release(d.channel_uuid);
  EXPECT_EQ(attempt(renamed).first, Errc::UnknownChannel);
}

TEST(Nwsc, ClientSeesRejection) {
  auto [a, b] = make_pipe();
  NwscAcceptor acc;
  auto fut = std::async(std::launch::async, [&, b = b] {
    try {
      acc.accept(*b);
    } catch (const Error&) {
    }
  });
  try {
    nwsc_open(*a, make_descriptor('C', Urgency::Default));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownChannel);
  }
  fut.get();
}
