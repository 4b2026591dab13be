#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>

#include "witchstack/common/error.hpp"
#include "witchstack/harness/dissect.hpp"
#include "witchstack/harness/phone.hpp"
#include "witchstack/harness/scenario.hpp"
#include "witchstack/harness/watch.hpp"

using namespace witchstack;
using namespace witchstack::harness;
using namespace std::chrono_literals;

namespace {

std::shared_ptr<KeyLog> keylog_of(const std::vector<std::string>& lines) {
  auto k = std::make_shared<KeyLog>();
  for (const auto& l : lines)
    if (auto e = parse_keylog_line(l)) k->add(*e);
  return k;
}

void expect_total(const Bytes& input, const Dissection& d) {
  EXPECT_EQ(reassemble(d.root), input);
  std::string where;
  EXPECT_TRUE(tree_consistent(d.root, &where)) << where;
}

std::size_t count_label(const DissectNode& n, const std::string& label) {
  std::size_t c = n.label == label;
  for (const auto& x : n.children) c += count_label(x, label);
  for (const auto& x : n.decoded) c += count_label(x, label);
  return c;
}

struct Session {
  Bytes link;
  std::vector<std::string> alloy;
  std::shared_ptr<KeyLog> keys = std::make_shared<KeyLog>();
  std::vector<aoverc::Keyring> keyrings;
};

const Session& short_session() {
  static Session s = [] {
    Session out;
    auto [w, p] = provision();
    out.keyrings = {p.aoverc, w.aoverc};
    auto transcript = std::make_shared<link::TranscriptWriter>();
    auto alloy_log = std::make_shared<alloy::AlloyTranscript>();
    PhoneOptions po;
    po.transcript = transcript;
    po.alloy_transcript = alloy_log;
    po.engine.keylog = out.keys;
    PhoneEndpoint phone(std::move(p), po);
    phone.start();
    WatchOptions wo;
    wo.port = phone.port();
    WatchEmulator watch(std::move(w), wo);
    watch.connect();
    phone.wait_channels(3, 2s);
    nanosync::HealthSample hs;
    hs.uuid[0] = 7;
    hs.sample_type = nanosync::sample_type::kHeartRate;
    hs.unit = nanosync::Unit::CountPerMinute;
    hs.value = 72;
    hs.start_ms = 1700000000000ull;
    hs.end_ms = hs.start_ms + 1000;
    hs.source = "Watch";
    watch.store()->insert({hs});
    watch.sync_health();
    watch.disconnect();
    phone.stop();
    out.link = transcript->snapshot();
    out.alloy = alloy_log->lines();
    return out;
  }();
  return s;
}

}  // namespace

TEST(Dissect, SessionLayersAllDecode) {
  const auto& s = short_session();
  DissectOptions opt;
  opt.keylog = s.keys;
  opt.keyrings = s.keyrings;
  auto d = dissect(s.link, opt);
  expect_total(s.link, d);
  EXPECT_FALSE(d.truncated);
  EXPECT_GT(count_label(d.root, "magnet"), 0u);
  EXPECT_GT(count_label(d.root, "ike"), 0u);
  EXPECT_GT(count_label(d.root, "ike.plaintext"), 0u);
  EXPECT_GT(count_label(d.root, "segment"), 0u);
  EXPECT_GT(count_label(d.root, "alloy.control"), 0u);
  EXPECT_GT(count_label(d.root, "nwsc.preamble"), 0u);
  EXPECT_GT(count_label(d.root, "alloy.message"), 0u);
  EXPECT_GT(count_label(d.root, "nanosync"), 0u);
  auto text = render_text(d);
  EXPECT_NE(text.find("SetupChannel"), std::string::npos);
  EXPECT_NE(text.find("IKE_SA_INIT"), std::string::npos);
  EXPECT_NE(text.find("ChangeSet"), std::string::npos);
  EXPECT_NO_THROW((void)nlohmann::json::parse(render_json(d)));
}

TEST(Dissect, WithoutKeysStopsAtCiphertext) {
  const auto& s = short_session();
  auto d = dissect(s.link);
  expect_total(s.link, d);
  EXPECT_EQ(d.decrypted, 0u);
  EXPECT_EQ(count_label(d.root, "segment"), 0u);
  EXPECT_GT(count_label(d.root, "esp"), 0u);
}

TEST(Dissect, AlloyLines) {
  const auto& s = short_session();
  std::string joined;
  for (const auto& l : s.alloy) joined += l + "\n";
  Bytes b = to_bytes(joined);
  DissectOptions opt;
  opt.keyrings = s.keyrings;
  auto d = dissect(b, opt);
  EXPECT_EQ(d.kind, TranscriptKind::AlloyLines);
  expect_total(b, d);
  EXPECT_EQ(d.frames, s.alloy.size());
  EXPECT_GT(count_label(d.root, "nanosync"), 0u);
}

TEST(Dissect, TruncatedFileKeepsPrefix) {
  const auto& s = short_session();
  for (std::size_t cut : {s.link.size() - 1, s.link.size() / 2, std::size_t{5}}) {
    Bytes part(s.link.begin(), s.link.begin() + static_cast<std::ptrdiff_t>(cut));
    auto d = dissect(part);
    EXPECT_TRUE(d.truncated);
    expect_total(part, d);
    EXPECT_NE(render_text(d).find("truncated"), std::string::npos);
  }
}

TEST(Dissect, ScenarioTranscriptsAreTotal) {
  for (const auto& name : scenario_names()) {
    ScenarioOptions o;
    o.samples = 100;
    auto r = run_scenario(name, o);
    DissectOptions opt;
    opt.keylog = keylog_of(r.keylog_lines);
    auto d = dissect(r.link_transcript, opt);
    expect_total(r.link_transcript, d);
    EXPECT_FALSE(d.truncated) << name;
    EXPECT_GT(d.decrypted, 0u) << name;
  }
}

TEST(Dissect, RandomBytesNeverCrash) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 3000; ++i) {
    Bytes b(rng() % 2048);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    if (i % 3 == 0 && !b.empty()) b[0] = '{';
    auto d = dissect(b);
    ASSERT_EQ(reassemble(d.root), b);
    ASSERT_TRUE(tree_consistent(d.root));
    (void)render_text(d);
  }
}

TEST(Dissect, MutatedTranscriptsNeverCrash) {
  const auto& s = short_session();
  DissectOptions opt;
  opt.keylog = s.keys;
  opt.keyrings = s.keyrings;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    Bytes b = s.link;
    for (int k = 0; k < 4; ++k) b[rng() % b.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255);
    auto d = dissect(b, opt);
    ASSERT_EQ(reassemble(d.root), b);
    ASSERT_TRUE(tree_consistent(d.root));
  }
}

TEST(Dissect, MissingFileIsUnreadable) {
  try {
    dissect_file("/nonexistent/transcript.bin");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::FileUnreadable);
  }
}
