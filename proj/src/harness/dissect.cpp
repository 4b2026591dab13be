#include "witchstack/harness/dissect.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <map>
#include <sstream>
#include <tuple>

#include "witchstack/alloy/control.hpp"
#include "witchstack/alloy/message.hpp"
#include "witchstack/alloy/nwsc.hpp"
#include "witchstack/common/error.hpp"
#include "witchstack/harness/health_sync.hpp"
#include "witchstack/harness/mux.hpp"
#include "witchstack/ike/message.hpp"
#include "witchstack/ike/tunnel.hpp"
#include "witchstack/link/magnet.hpp"
#include "witchstack/link/nrlp.hpp"
#include "witchstack/link/transcript.hpp"
#include "witchstack/nanosync/codec.hpp"
#include "witchstack/shoes/codec.hpp"

namespace witchstack::harness {

using link::Direction;
using ike::ProtectionClass;

namespace {

constexpr std::size_t kMaxUnit = 1u << 24;

std::string hex(std::uint64_t v, int width) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%0*llx", width, static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t be(ByteView b) {
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

DissectNode leaf(std::string label, ByteView b, std::string info = {}) {
  DissectNode n;
  n.label = std::move(label);
  n.info = std::move(info);
  n.raw.assign(b.begin(), b.end());
  return n;
}

// Splits `whole` front to back into children of `parent`.
class Splitter {
 public:
  Splitter(DissectNode& parent, ByteView whole) : parent_(parent), whole_(whole) {}

  ByteView take(std::string label, std::size_t n, std::string info = {}) {
    n = std::min(n, whole_.size() - pos_);
    ByteView b = whole_.subspan(pos_, n);
    pos_ += n;
    parent_.children.push_back(leaf(std::move(label), b, std::move(info)));
    return b;
  }
  void add(DissectNode node) {
    pos_ += node.raw.size();
    parent_.children.push_back(std::move(node));
  }
  ByteView rest() const { return whole_.subspan(pos_); }
  std::size_t remaining() const { return whole_.size() - pos_; }
  void finish(const std::string& label = "trailing") {
    if (remaining()) take(label, remaining());
  }

 private:
  DissectNode& parent_;
  ByteView whole_;
  std::size_t pos_ = 0;
};

std::string what_of(const std::exception& e) {
  if (auto* we = dynamic_cast<const Error*>(&e)) return std::string(errc_name(we->code())) + ": " + we->what();
  return e.what();
}

std::string summarize(const nanosync::NanoSyncMessage& msg) {
  std::ostringstream out;
  if (auto* cs = std::get_if<nanosync::ChangeSet>(&msg)) {
    std::size_t ins = 0, del = 0, purge = 0;
    for (const auto& c : cs->changes) {
      ins += c.inserts.size();
      del += c.deletes.size();
      for (const auto& d : c.deletes) purge += d.purge;
    }
    out << "ChangeSet status=" << (cs->status == nanosync::SyncStatus::Done ? "done" : "continue")
        << (cs->reset ? " reset" : "") << " changes=" << cs->changes.size() << " inserts=" << ins
        << " deletes=" << del << " purges=" << purge;
    std::size_t shown = 0;
    for (const auto& c : cs->changes)
      for (const auto& s : c.inserts) {
        if (shown++ == 4) break;
        out << "; " << nanosync::sample_type_name(s.sample_type) << ' ' << s.value << " from '" << s.source
            << "' " << uuid_to_string(s.uuid);
      }
  } else {
    const auto& st = std::get<nanosync::StatusReply>(msg);
    out << "StatusReply";
    for (const auto& a : st.anchors) out << ' ' << a.domain << '=' << a.value;
  }
  return out.str();
}

class Dissector {
 public:
  Dissector(const DissectOptions& opt, Dissection& d) : opt_(opt), d_(d) {}

  DissectNode record(const link::TranscriptRecord& rec, ByteView encoded) {
    DissectNode n = leaf("record", encoded, std::string(link::direction_name(rec.direction)));
    n.children.clear();
    Splitter s(n, encoded);
    s.take("timestamp_us", 8, std::to_string(rec.timestamp_us));
    s.take("direction", 1, std::string(link::direction_name(rec.direction)));
    s.take("length", 4, std::to_string(rec.raw.size()));
    s.add(link_frame(rec.raw, rec.direction));
    n.raw.assign(encoded.begin(), encoded.end());
    ++d_.frames;
    return n;
  }

  DissectNode alloy_line(ByteView raw) {
    DissectNode n = leaf("alloy.line", raw);
    std::string text(raw.begin(), raw.end());
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      n.info = "unparseable line";
      ++d_.undecodable;
      return n;
    }
    std::ostringstream info;
    auto str = [&](const char* k) { return j.contains(k) && j[k].is_string() ? j[k].get<std::string>() : ""; };
    info << str("direction") << ' ' << str("channel") << ' ' << str("type_name");
    if (j.contains("stream") && j["stream"].is_number()) info << " stream=" << j["stream"].get<std::uint64_t>();
    std::string topic = str("topic");
    if (!topic.empty()) info << " topic=" << topic;
    if (!str("uuid").empty()) info << " uuid=" << str("uuid");
    if (!str("response_identifier").empty()) info << " reply-to=" << str("response_identifier");
    n.info = info.str();
    std::string hexpay = str("payload_hex");
    if (!hexpay.empty()) {
      try {
        Bytes payload = from_hex(hexpay);
        if (topic == kHealthTopic)
          n.decoded.push_back(envelope(payload));
        else
          n.decoded.push_back(leaf("payload", payload));
      } catch (const std::exception& e) {
        n.decoded.push_back(leaf("payload.unknown", {}, "bad payload hex: " + what_of(e)));
      }
    }
    return n;
  }

 private:
  struct Stream {
    Bytes buf;
    std::uint16_t port = 0;
    bool opened = false;
    bool dead = false;
    std::map<std::uint16_t, std::string> topics;
  };

  DissectNode link_frame(ByteView raw, Direction dir) {
    DissectNode n = leaf("link", raw);
    if (raw.size() < 2) {
      n.info = "short link frame";
      return n;
    }
    Splitter s(n, raw);
    s.take("sequence", 1, std::to_string(raw[0]));
    s.take("packets_received", 1, std::to_string(raw[1]));
    ByteView data = s.rest();
    s.add(nrlp_phase_ ? nrlp_data(data, dir) : magnet(data, dir));
    return n;
  }

  DissectNode magnet(ByteView data, Direction dir) {
    DissectNode n = leaf("magnet", data);
    if (data.empty()) {
      n.info = "empty";
      return n;
    }
    Splitter s(n, data);
    std::uint8_t op = data[0];
    bool known = link::is_known_magnet_opcode(op);
    s.take("opcode", 1, known ? std::string(link::magnet_opcode_name(op)) : "unknown " + hex(op, 2));
    link::MagnetMessage m{op, Bytes(data.begin() + 1, data.end())};
    std::string info = known ? std::string(link::magnet_opcode_name(op)) : "unknown opcode";
    try {
      using link::MagnetOpcode;
      if (op == static_cast<std::uint8_t>(MagnetOpcode::CreateChannel))
        info += " service=" + link::decode_channel_request(m).service;
      else if (op == static_cast<std::uint8_t>(MagnetOpcode::AcceptChannel)) {
        auto a = link::decode_channel_accept(m);
        info += " service=" + a.service + " channel=" + std::to_string(a.channel_id);
        if (dir == Direction::ToWatch) nrlp_phase_ = true;
      } else if (op == static_cast<std::uint8_t>(MagnetOpcode::ErrorResponse)) {
        auto e = link::decode_channel_error(m);
        info += " service=" + e.service + " reason=" + std::to_string(e.reason);
      }
    } catch (const std::exception& e) {
      info += " (" + what_of(e) + ")";
    }
    n.info = info;
    s.finish("body");
    return n;
  }

  DissectNode nrlp_data(ByteView data, Direction dir) {
    Bytes& buf = nrlp_buf_[static_cast<int>(dir)];
    if (buf.empty() && aligned(data)) {
      DissectNode n = leaf("nrlp.frames", data);
      Splitter s(n, data);
      while (s.remaining()) {
        ByteView rest = s.rest();
        std::size_t len = 5 + ((std::size_t{rest[1]} << 8) | rest[2]);
        s.add(nrlp_frame(rest.subspan(0, len), dir));
      }
      if (n.children.size() == 1) return std::move(n.children.front());
      return n;
    }
    DissectNode n = leaf("nrlp.fragment", data);
    append(buf, data);
    std::size_t pos = 0;
    while (buf.size() - pos >= link::kNrlpOverhead) {
      std::size_t len = 5 + ((std::size_t{buf[pos + 1]} << 8) | buf[pos + 2]);
      if (buf.size() - pos < len) break;
      n.decoded.push_back(nrlp_frame(ByteView(buf).subspan(pos, len), dir));
      pos += len;
    }
    buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(pos));
    n.info = n.decoded.empty() ? "partial frame, " + std::to_string(buf.size()) + " byte(s) buffered"
                               : "completes " + std::to_string(n.decoded.size()) + " frame(s)";
    return n;
  }

  static bool aligned(ByteView data) {
    std::size_t pos = 0;
    while (pos < data.size()) {
      if (data.size() - pos < link::kNrlpOverhead) return false;
      std::size_t len = 5 + ((std::size_t{data[pos + 1]} << 8) | data[pos + 2]);
      if (data.size() - pos < len) return false;
      pos += len;
    }
    return !data.empty();
  }

  DissectNode nrlp_frame(ByteView f, Direction dir) {
    DissectNode n = leaf("nrlp", f);
    std::uint8_t type = f[0];
    std::string name = link::is_known_nrlp_type(type) ? std::string(link::nrlp_type_name(type)) : "unknown";
    bool ok = true;
    std::string problem;
    try {
      link::nrlp_decode(f);
    } catch (const std::exception& e) {
      ok = false;
      problem = what_of(e);
    }
    n.info = name + " " + hex(type, 2) + " len=" + std::to_string(f.size() - 5) + (ok ? "" : " [" + problem + "]");
    Splitter s(n, f);
    s.take("type", 1, name);
    s.take("length", 2, std::to_string(f.size() - 5));
    ByteView payload = f.subspan(3, f.size() - 5);
    if (!ok) {
      s.take("payload.unknown", payload.size());
    } else if (type == static_cast<std::uint8_t>(link::NrlpType::IkeV2)) {
      s.add(ike(payload));
    } else if (type == 0x64 || type == 0x65 || type == 0x68 || type == 0x69) {
      s.add(esp(payload, type >= 0x68 ? ProtectionClass::C : ProtectionClass::D, dir));
    } else if (type == static_cast<std::uint8_t>(link::NrlpType::Echo)) {
      std::string kind = payload.empty() ? "empty" : payload[0] == 1 ? "ping" : payload[0] == 2 ? "pong" : "other";
      s.take("echo", payload.size(), kind);
    } else {
      s.take("payload.unknown", payload.size());
    }
    std::uint16_t ck = static_cast<std::uint16_t>(be(f.subspan(f.size() - 2)));
    s.take("checksum", 2, hex(ck, 4) + (ok ? " ok" : ""));
    return n;
  }

  DissectNode payloads(const std::string& label, ByteView body) {
    DissectNode n = leaf(label, body);
    try {
      ike::decode_payloads(body);
    } catch (const std::exception& e) {
      n.info = "undecodable payloads: " + what_of(e);
      ++d_.undecodable;
      return n;
    }
    Splitter s(n, body);
    while (s.remaining()) {
      ByteView rest = s.rest();
      std::size_t len = 3 + ((std::size_t{rest[1]} << 8) | rest[2]);
      ike::IkePayload p{rest[0], Bytes(rest.begin() + 3, rest.begin() + static_cast<std::ptrdiff_t>(len))};
      DissectNode pn = leaf("ike.payload", rest.subspan(0, len));
      Splitter ps(pn, rest.subspan(0, len));
      ps.take("type", 1, std::to_string(p.type));
      ps.take("length", 2, std::to_string(len - 3));
      if (auto nt = ike::as_notify(p)) {
        std::string nn = ike::is_known_notify_type(nt->notify_type) ? std::string(ike::notify_name(nt->notify_type))
                                                                     : std::to_string(nt->notify_type);
        pn.info = "Notify " + nn + " (" + std::to_string(nt->data.size()) + " byte(s))";
      } else {
        pn.info = "payload " + std::to_string(p.type);
      }
      ps.finish("body");
      s.add(std::move(pn));
    }
    return n;
  }

  DissectNode ike(ByteView wire) {
    DissectNode n = leaf("ike", wire);
    ike::IkeHeader h;
    try {
      h = ike::parse_ike_header(wire);
    } catch (const std::exception& e) {
      n.info = "malformed ike: " + what_of(e);
      ++d_.undecodable;
      return n;
    }
    const char* ex = h.exchange == 34 ? "IKE_SA_INIT" : h.exchange == 35 ? "IKE_AUTH" : h.exchange == 37 ? "INFORMATIONAL" : "exchange?";
    bool enc = h.flags & ike::kFlagEncrypted;
    bool from_i = h.flags & ike::kFlagInitiator;
    std::string flags = std::string(from_i ? "initiator" : "responder") +
                        ((h.flags & ike::kFlagResponse) ? ",response" : ",request") + (enc ? ",encrypted" : "");
    n.info = std::string(ex) + " msg=" + std::to_string(h.msg_id) + " " + flags;
    Splitter s(n, wire);
    s.take("spi_i", 8, hex(h.spi_i, 16));
    s.take("spi_r", 8, hex(h.spi_r, 16));
    s.take("version", 1, hex(h.version, 2));
    s.take("exchange", 1, ex);
    s.take("flags", 1, flags);
    s.take("msg_id", 4, std::to_string(h.msg_id));
    s.take("length", 4, std::to_string(h.length));
    ByteView body = s.rest();
    if (!enc) {
      s.add(payloads("ike.payloads", body));
      return n;
    }
    DissectNode b = leaf("ike.encrypted", body);
    if (body.size() >= ike::kIkeIvSize + crypto::kAeadTagSize) {
      Splitter bs(b, body);
      bs.take("iv", ike::kIkeIvSize);
      bs.take("ciphertext", body.size() - ike::kIkeIvSize - crypto::kAeadTagSize);
      bs.take("tag", crypto::kAeadTagSize);
    }
    std::optional<KeyLogEntry> key;
    if (opt_.keylog) key = opt_.keylog->find(h.spi_i, h.spi_r);
    if (!key) {
      b.info = "no key";
    } else {
      const auto& k = from_i ? key->keys.ike_i2r : key->keys.ike_r2i;
      ike::IkeCipher c{ike::aead_for(key->suite), k.key, k.salt};
      try {
        auto m = ike::ike_decode(wire, &c);
        b.decoded.push_back(payloads("ike.plaintext", ike::encode_payloads(m.payloads)));
        b.info = "decrypted";
        ++d_.decrypted;
      } catch (const std::exception& e) {
        b.info = "decrypt failed: " + what_of(e);
      }
    }
    s.add(std::move(b));
    return n;
  }

  DissectNode esp(ByteView wire, ProtectionClass c, Direction dir) {
    DissectNode n = leaf("esp", wire, std::string("class ") + static_cast<char>(c));
    if (wire.size() < ike::kEspSeqSize) {
      n.info += " short";
      return n;
    }
    Splitter s(n, wire);
    s.take("sequence", ike::kEspSeqSize, std::to_string(be(wire.subspan(0, ike::kEspSeqSize))));
    DissectNode sealed = leaf("sealed", s.rest());
    std::optional<Bytes> plain;
    if (opt_.keylog) {
      auto entries = opt_.keylog->entries();
      for (auto it = entries.rbegin(); it != entries.rend() && !plain; ++it) {
        if (it->protection_class != c) continue;
        const auto& first = dir == Direction::ToPhone ? it->keys.esp_i2r : it->keys.esp_r2i;
        const auto& second = dir == Direction::ToPhone ? it->keys.esp_r2i : it->keys.esp_i2r;
        plain = ike::esp_decrypt(it->suite, first, wire);
        if (!plain) plain = ike::esp_decrypt(it->suite, second, wire);
      }
    }
    if (plain) {
      ++d_.decrypted;
      sealed.info = "decrypted";
      sealed.decoded.push_back(segment(*plain, c, dir));
    } else {
      sealed.info = opt_.keylog ? "no matching key" : "no key";
    }
    s.add(std::move(sealed));
    return n;
  }

  DissectNode segment(ByteView plain, ProtectionClass c, Direction dir) {
    DissectNode n = leaf("segment", plain);
    Segment seg;
    try {
      seg = decode_segment(plain);
    } catch (const std::exception& e) {
      n.label = "inner.unknown";
      n.info = what_of(e);
      ++d_.undecodable;
      return n;
    }
    auto ck = std::make_pair(static_cast<int>(c), seg.conn);
    if (seg.kind == SegmentKind::Syn) ports_[ck] = seg.port;
    std::uint16_t port = seg.port ? seg.port : ports_.count(ck) ? ports_[ck] : 0;
    n.info = std::string(segment_kind_name(static_cast<std::uint8_t>(seg.kind))) + " conn=" + std::to_string(seg.conn) +
             " port=" + std::to_string(port) + " bytes=" + std::to_string(seg.payload.size());
    Splitter s(n, plain);
    s.take("kind", 1, std::string(segment_kind_name(static_cast<std::uint8_t>(seg.kind))));
    s.take("conn", 4, std::to_string(seg.conn));
    s.take("port", 2, std::to_string(seg.port));
    s.finish("payload");
    if (seg.kind == SegmentKind::Data && !seg.payload.empty()) {
      Stream& st = streams_[{static_cast<int>(c), static_cast<int>(dir), seg.conn}];
      st.port = port;
      append(st.buf, seg.payload);
      drain(st, dir, n.decoded);
    }
    return n;
  }

  void drain(Stream& st, Direction dir, std::vector<DissectNode>& out) {
    while (!st.buf.empty()) {
      std::size_t used = 0;
      if (st.dead) {
        out.push_back(leaf("stream.opaque", st.buf));
        used = st.buf.size();
      } else if (st.port == alloy::kControlPort) {
        used = control_unit(st, out);
      } else if (st.port == alloy::kDataPort) {
        used = data_unit(st, dir, out);
      } else if (st.port == shoes::kShoesPort) {
        used = shoes_unit(st, dir, out);
      } else {
        st.dead = true;
        continue;
      }
      if (!used) return;
      st.buf.erase(st.buf.begin(), st.buf.begin() + static_cast<std::ptrdiff_t>(used));
    }
  }

  // type(1) | length(4) | body, shared by control and data frames.
  static std::size_t framed_size(const Bytes& buf) {
    if (buf.size() < alloy::kAlloyPrefixSize) return 0;
    return alloy::kAlloyPrefixSize + be(ByteView(buf).subspan(1, 4));
  }

  std::size_t control_unit(Stream& st, std::vector<DissectNode>& out) {
    std::size_t total = framed_size(st.buf);
    if (!total) return 0;
    if (total > kMaxUnit) {
      st.dead = true;
      return 0;
    }
    if (st.buf.size() < total) return 0;
    ByteView u = ByteView(st.buf).subspan(0, total);
    DissectNode n = leaf("alloy.control", u);
    std::uint8_t t = u[0];
    n.info = std::string(alloy::control_type_name(t));
    ByteView body = u.subspan(alloy::kAlloyPrefixSize);
    try {
      if (t == static_cast<std::uint8_t>(alloy::ControlType::Hello)) {
        auto h = alloy::decode_hello(body);
        n.info += " version=" + h.version + " device=" + h.device_id + " setups=" + std::to_string(h.setup_count);
      } else if (t == static_cast<std::uint8_t>(alloy::ControlType::SetupChannel)) {
        auto d = alloy::decode_setup(body);
        n.info += " " + d.name + " " + uuid_to_string(d.channel_uuid) + " port=" + std::to_string(d.tcp_port);
      } else if (t == static_cast<std::uint8_t>(alloy::ControlType::CloseChannel)) {
        n.info += " " + uuid_to_string(alloy::decode_close(body));
      }
    } catch (const std::exception& e) {
      n.info += " (" + what_of(e) + ")";
    }
    Splitter s(n, u);
    s.take("type", 1);
    s.take("length", 4, std::to_string(body.size()));
    s.finish("body");
    out.push_back(std::move(n));
    return total;
  }

  std::size_t data_unit(Stream& st, Direction dir, std::vector<DissectNode>& out) {
    if (!st.opened) {
      if (dir == Direction::ToWatch) {
        st.opened = true;
        out.push_back(leaf("nwsc.verdict", ByteView(st.buf).subspan(0, 1),
                           st.buf[0] == alloy::kNwscAccept ? "accept" : "reject"));
        return 1;
      }
      std::size_t total = 1 + std::size_t{st.buf[0]} + sizeof(Uuid);
      if (st.buf.size() < total) return 0;
      st.opened = true;
      ByteView u = ByteView(st.buf).subspan(0, total);
      DissectNode n = leaf("nwsc.preamble", u);
      Splitter s(n, u);
      s.take("name_length", 1);
      ByteView name = s.take("name", st.buf[0]);
      ByteView id = s.take("channel_uuid", sizeof(Uuid));
      Uuid uuid{};
      std::copy(id.begin(), id.end(), uuid.begin());
      n.info = std::string(name.begin(), name.end()) + " " + uuid_to_string(uuid);
      out.push_back(std::move(n));
      return total;
    }
    std::size_t total = framed_size(st.buf);
    if (!total) return 0;
    if (total > kMaxUnit) {
      st.dead = true;
      return 0;
    }
    if (st.buf.size() < total) return 0;
    ByteView u = ByteView(st.buf).subspan(0, total);
    DissectNode n = leaf("alloy.message", u);
    Splitter s(n, u);
    s.take("type", 1, std::string(alloy::message_type_name(u[0])));
    s.take("length", 4, std::to_string(total - alloy::kAlloyPrefixSize));
    s.finish("body");
    try {
      auto m = alloy::alloy_decode(u);
      if (m.topic) st.topics[m.stream] = *m.topic;
      auto topic = st.topics.count(m.stream) ? st.topics[m.stream] : std::string();
      std::ostringstream info;
      info << alloy::message_type_name(m.msg_type) << " seq=" << m.sequence << " stream=" << m.stream
           << " flags=" << hex(m.flags(), 2);
      if (!topic.empty()) info << " topic=" << topic;
      if (!m.message_uuid.empty()) info << " uuid=" << m.message_uuid;
      if (!m.response_identifier.empty()) info << " reply-to=" << m.response_identifier;
      if (m.expiry) info << " expiry=" << *m.expiry;
      n.info = info.str();
      if (!m.payload.empty()) {
        if (topic == kHealthTopic)
          n.decoded.push_back(envelope(m.payload));
        else
          n.decoded.push_back(leaf("alloy.payload", m.payload));
      }
    } catch (const std::exception& e) {
      n.info = "undecodable alloy message: " + what_of(e);
      ++d_.undecodable;
    }
    out.push_back(std::move(n));
    return total;
  }

  std::size_t shoes_unit(Stream& st, Direction dir, std::vector<DissectNode>& out) {
    if (dir == Direction::ToWatch && !st.opened) {
      if (st.buf.size() < shoes::kReplySize) return 0;
      st.opened = true;
      ByteView u = ByteView(st.buf).subspan(0, shoes::kReplySize);
      DissectNode n = leaf("shoes.reply", u);
      try {
        auto r = shoes::shoes_decode_reply(u);
        n.info = "domain=" + std::to_string(r.domain) + " code=" + std::to_string(r.code) +
                 (r.denied() ? " denied" : "");
      } catch (const std::exception& e) {
        n.info = what_of(e);
      }
      out.push_back(std::move(n));
      return shoes::kReplySize;
    }
    out.push_back(leaf("shoes.stream", st.buf, std::to_string(st.buf.size()) + " byte(s)"));
    return st.buf.size();
  }

  DissectNode envelope(ByteView record) {
    DissectNode n = leaf("aoverc.record", record);
    aoverc::Envelope env;
    try {
      env = aoverc::decode_record(record);
    } catch (const std::exception& e) {
      n.info = "undecodable envelope: " + what_of(e);
      ++d_.undecodable;
      return n;
    }
    n.info = "ekd=" + std::to_string(env.ekd.size()) + " sed=" + std::to_string(env.sed.size()) + " (" +
             std::to_string(env.sed.size() / aoverc::kBlockSize) + " blocks)";
    for (const auto& keys : opt_.keyrings) {
      for (auto mode : {aoverc::Mode::Faithful, aoverc::Mode::AeadMitigated}) {
        try {
          Bytes plain = aoverc::decrypt(keys, env, mode);
          DissectNode ns = leaf("nanosync", plain);
          try {
            ns.info = summarize(nanosync::nanosync_decode(plain));
          } catch (const std::exception& e) {
            ns.info = "undecodable: " + what_of(e);
          }
          n.info += mode == aoverc::Mode::Faithful ? " cbc" : " aead";
          n.decoded.push_back(std::move(ns));
          ++d_.decrypted;
          return n;
        } catch (const std::exception&) {
        }
      }
    }
    return n;
  }

  const DissectOptions& opt_;
  Dissection& d_;
  bool nrlp_phase_ = false;
  Bytes nrlp_buf_[2];
  std::map<std::tuple<int, int, std::uint32_t>, Stream> streams_;
  std::map<std::pair<int, std::uint32_t>, std::uint16_t> ports_;
};

void assign_offsets(DissectNode& n, std::size_t base) {
  n.offset = base;
  std::size_t at = base;
  for (auto& c : n.children) {
    assign_offsets(c, at);
    at += c.raw.size();
  }
  for (auto& d : n.decoded) assign_offsets(d, 0);
}

bool looks_like_lines(ByteView b) {
  for (auto x : b) {
    if (x == ' ' || x == '\n' || x == '\r' || x == '\t') continue;
    return x == '{';
  }
  return false;
}

}  // namespace

Dissection dissect(ByteView transcript, const DissectOptions& opt) {
  Dissection d;
  d.root = leaf("transcript", transcript);
  try {
    Dissector x(opt, d);
    if (looks_like_lines(transcript)) {
      d.kind = TranscriptKind::AlloyLines;
      d.root.label = "alloy-transcript";
      std::size_t pos = 0;
      while (pos < transcript.size()) {
        auto nl = std::find(transcript.begin() + static_cast<std::ptrdiff_t>(pos), transcript.end(), '\n');
        std::size_t end = nl == transcript.end() ? transcript.size() : static_cast<std::size_t>(nl - transcript.begin()) + 1;
        ByteView line = transcript.subspan(pos, end - pos);
        auto node = x.alloy_line(line);
        if (nl == transcript.end() && node.info == "unparseable line") {
          node.label = "truncated";
          node.info = "truncated line";
          d.truncated = true;
        }
        d.root.children.push_back(std::move(node));
        ++d.frames;
        pos = end;
      }
    } else {
      auto parsed = link::parse_transcript(transcript);
      std::size_t pos = 0;
      for (const auto& rec : parsed.records) {
        std::size_t len = link::kTranscriptRecordHeader + rec.raw.size();
        d.root.children.push_back(x.record(rec, transcript.subspan(pos, len)));
        pos += len;
      }
      if (parsed.truncated) {
        d.truncated = true;
        d.root.children.push_back(leaf("truncated", transcript.subspan(pos),
                                       parsed.bad_direction ? "bad direction byte" : "record cut short"));
      }
    }
    d.root.info = std::to_string(d.frames) + " record(s)" + (d.truncated ? ", truncated" : "");
  } catch (const std::exception& e) {
    d.root.children.clear();
    d.root.info = "dissector stopped: " + std::string(e.what());
  }
  assign_offsets(d.root, 0);
  return d;
}

Dissection dissect_file(const std::string& path, const DissectOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileUnreadable, path);
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::FileUnreadable, path);
  return dissect(data, opt);
}

Bytes reassemble(const DissectNode& node) {
  if (node.children.empty()) return node.raw;
  Bytes out;
  for (const auto& c : node.children) append(out, reassemble(c));
  return out;
}

bool tree_consistent(const DissectNode& node, std::string* where) {
  if (!node.children.empty()) {
    Bytes joined;
    for (const auto& c : node.children) append(joined, c.raw);
    if (joined != node.raw) {
      if (where) *where = node.label + " @" + std::to_string(node.offset);
      return false;
    }
  }
  for (const auto& c : node.children)
    if (!tree_consistent(c, where)) return false;
  for (const auto& d : node.decoded)
    if (!tree_consistent(d, where)) return false;
  return true;
}

namespace {

bool dump_hex(const std::string& label) {
  return label.find("unknown") != std::string::npos || label.find("opaque") != std::string::npos ||
         label == "truncated" || label == "trailing";
}

void render(std::ostringstream& out, const DissectNode& n, int depth, const char* mark) {
  std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  out << pad << mark << n.label << " [" << n.offset << "+" << n.raw.size() << "]";
  if (!n.info.empty()) out << " " << n.info;
  if (n.children.empty() && !dump_hex(n.label) && !n.raw.empty() && n.raw.size() <= 16)
    out << " = " << to_hex(n.raw);
  out << '\n';
  if (n.children.empty() && dump_hex(n.label)) {
    std::size_t shown = std::min<std::size_t>(n.raw.size(), 256);
    for (std::size_t i = 0; i < shown; i += 16) {
      char off[16];
      std::snprintf(off, sizeof off, "%06zx", n.offset + i);
      out << pad << "    " << off << "  "
          << to_hex(ByteView(n.raw).subspan(i, std::min<std::size_t>(16, shown - i))) << '\n';
    }
    if (shown < n.raw.size()) out << pad << "    (" << n.raw.size() - shown << " more byte(s))\n";
  }
  for (const auto& c : n.children) render(out, c, depth + 1, "");
  for (const auto& d : n.decoded) render(out, d, depth + 1, "=> ");
}

nlohmann::json node_json(const DissectNode& n) {
  nlohmann::json j{{"label", n.label}, {"offset", n.offset}, {"length", n.raw.size()}};
  if (!n.info.empty()) j["info"] = n.info;
  if (n.children.empty()) j["hex"] = to_hex(n.raw);
  for (const auto& c : n.children) j["children"].push_back(node_json(c));
  for (const auto& d : n.decoded) j["decoded"].push_back(node_json(d));
  return j;
}

}  // namespace

std::string render_text(const Dissection& d) {
  std::ostringstream out;
  render(out, d.root, 0, "");
  out << "records=" << d.frames << " decrypted=" << d.decrypted << " undecodable=" << d.undecodable
      << (d.truncated ? " truncated" : "") << '\n';
  return out.str();
}

std::string render_json(const Dissection& d) {
  nlohmann::json j{{"kind", d.kind == TranscriptKind::Link ? "link" : "alloy-lines"},
                   {"records", d.frames},
                   {"decrypted", d.decrypted},
                   {"undecodable", d.undecodable},
                   {"truncated", d.truncated},
                   {"tree", node_json(d.root)}};
  return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace witchstack::harness
