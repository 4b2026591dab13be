#include "witchstack/nanosync/codec.hpp"

#include <map>
#include <mutex>

namespace witchstack::nanosync {

namespace {

std::mutex registry_mu;
std::map<std::uint8_t, std::string>& registry() {
  static std::map<std::uint8_t, std::string> names{
      {sample_type::kHeartRate, "HeartRate"},
      {sample_type::kActiveEnergy, "ActiveEnergyBurned"},
  };
  return names;
}

class TlvWriter {
 public:
  std::size_t open(std::uint8_t t) {
    w_.u8(t).u32(0);
    return w_.size();
  }
  void close(std::size_t body_start) {
    w_.patch_u32(body_start - 4, static_cast<std::uint32_t>(w_.size() - body_start));
  }
  void field(std::uint8_t t, ByteView value) {
    w_.u8(t).u32(static_cast<std::uint32_t>(value.size())).raw(value);
  }
  void field(std::uint8_t t, std::string_view value) { field(t, ByteView(to_bytes(value))); }
  // Pads so the next TLV body starts on a block boundary.
  void align_next_body() {
    std::size_t r = (w_.size() + kTlvHeader) % 16;
    if (r == 0) return;
    std::size_t total = 16 - r;
    if (total < kTlvHeader) total += 16;
    w_.u8(tag::kPad).u32(static_cast<std::uint32_t>(total - kTlvHeader));
    for (std::size_t i = kTlvHeader; i < total; ++i) w_.u8(0);
  }
  ByteWriter& raw() { return w_; }
  std::size_t size() const { return w_.size(); }
  Bytes take() { return w_.take(); }

 private:
  ByteWriter w_;
};

struct Tlv {
  std::uint8_t tag;
  ByteView body;
};

std::vector<Tlv> split(ByteView data) {
  ByteReader r(data);
  std::vector<Tlv> out;
  while (!r.empty()) {
    auto t = r.u8();
    auto len = r.u32();
    out.push_back(Tlv{t, r.view(len)});
  }
  return out;
}

void write_sample_fixed(ByteWriter& w, const HealthSample& s) {
  w.raw(s.uuid).u8(s.sample_type).u8(static_cast<std::uint8_t>(s.unit)).f64(s.value);
  w.u64(s.start_ms).u64(s.end_ms);
}

void write_sample(TlvWriter& w, const HealthSample& s) {
  write_sample_fixed(w.raw(), s);
  if (!s.source.empty()) w.field(tag::kSource, s.source);
  if (!s.provenance.empty()) w.field(tag::kProvenance, s.provenance);
}

void write_anchor(ByteWriter& w, const SyncAnchor& a) { w.u64(a.value).raw(a.domain); }

SyncAnchor read_anchor(ByteView body) {
  ByteReader r(body);
  SyncAnchor a;
  a.value = r.u64();
  a.domain = to_string(r.rest());
  return a;
}

std::uint64_t read_u64(ByteView body) {
  if (body.size() != 8) throw Error(Errc::Malformed, "anchor width");
  return ByteReader(body).u64();
}

Deletion read_deletion(ByteView body) {
  ByteReader r(body);
  Deletion d;
  auto id = r.view(16);
  std::copy(id.begin(), id.end(), d.uuid.begin());
  d.sample_type = r.u8();
  d.deletion_ms = r.u64();
  auto flags = r.u8();
  if (flags & ~0x01) throw Error(Errc::Malformed, "delete flags");
  d.purge = flags & 0x01;
  return d;
}

NanoSyncChange read_change(ByteView body) {
  NanoSyncChange c;
  std::optional<std::uint64_t> start, end;
  bool have_type = false;
  for (auto& f : split(body)) {
    switch (f.tag) {
      case tag::kObjectType:
        c.object_type = to_string(f.body);
        have_type = true;
        break;
      case tag::kStartAnchor:
        start = read_u64(f.body);
        break;
      case tag::kEndAnchor:
        end = read_u64(f.body);
        break;
      case tag::kInsert:
        c.inserts.push_back(decode_sample(f.body));
        break;
      case tag::kDelete:
        c.deletes.push_back(read_deletion(f.body));
        break;
      default:
        break;
    }
  }
  if (!have_type || !start || !end) throw Error(Errc::Malformed, "change missing field");
  if (*end != *start + 1) throw Error(Errc::Malformed, "anchor step");
  if (c.inserts.empty() && c.deletes.empty()) throw Error(Errc::Malformed, "empty change");
  c.start_anchor = {c.object_type, *start};
  c.end_anchor = {c.object_type, *end};
  return c;
}

ChangeSet read_change_set(ByteView body) {
  ChangeSet cs;
  bool have_status = false;
  for (auto& f : split(body)) {
    if (f.tag == tag::kStatus) {
      if (f.body.size() != 1 || f.body[0] > 1) throw Error(Errc::Malformed, "status");
      cs.status = static_cast<SyncStatus>(f.body[0]);
      have_status = true;
    } else if (f.tag == tag::kReset) {
      cs.reset = true;
    } else if (f.tag == tag::kChange) {
      cs.changes.push_back(read_change(f.body));
    }
  }
  if (!have_status) throw Error(Errc::Malformed, "change set without status");
  return cs;
}

StatusReply read_status(ByteView body) {
  StatusReply s;
  for (auto& f : split(body))
    if (f.tag == tag::kAnchor) s.anchors.push_back(read_anchor(f.body));
  return s;
}

void validate(const NanoSyncChange& c) {
  if (c.start_anchor.domain != c.object_type || c.end_anchor.domain != c.object_type)
    throw Error(Errc::Malformed, "anchor domain differs from object type");
  if (c.end_anchor.value != c.start_anchor.value + 1) throw Error(Errc::Malformed, "anchor step");
  if (c.inserts.empty() && c.deletes.empty()) throw Error(Errc::Malformed, "empty change");
}

Bytes encode_impl(const NanoSyncMessage& msg, std::vector<std::size_t>* offsets) {
  TlvWriter w;
  if (auto* cs = std::get_if<ChangeSet>(&msg)) {
    auto top = w.open(tag::kChangeSet);
    w.field(tag::kStatus, Bytes{static_cast<std::uint8_t>(cs->status)});
    if (cs->reset) w.field(tag::kReset, Bytes{});
    for (auto& c : cs->changes) {
      validate(c);
      auto ch = w.open(tag::kChange);
      w.field(tag::kObjectType, c.object_type);
      w.field(tag::kStartAnchor, ByteWriter().u64(c.start_anchor.value).take());
      w.field(tag::kEndAnchor, ByteWriter().u64(c.end_anchor.value).take());
      for (auto& s : c.inserts) {
        if (s.end_ms < s.start_ms) throw Error(Errc::Malformed, "sample ends before it starts");
        w.align_next_body();
        auto ins = w.open(tag::kInsert);
        if (offsets) offsets->push_back(ins);
        write_sample(w, s);
        w.close(ins);
      }
      for (auto& d : c.deletes) {
        ByteWriter b;
        b.raw(d.uuid).u8(d.sample_type).u64(d.deletion_ms).u8(d.purge ? 1 : 0);
        w.field(tag::kDelete, b.bytes());
      }
      w.close(ch);
    }
    w.close(top);
  } else {
    auto& st = std::get<StatusReply>(msg);
    auto top = w.open(tag::kStatusReply);
    for (auto& a : st.anchors) {
      ByteWriter b;
      write_anchor(b, a);
      w.field(tag::kAnchor, b.bytes());
    }
    w.close(top);
  }
  return w.take();
}

}  // namespace

std::string sample_type_name(std::uint8_t code) {
  std::lock_guard lock(registry_mu);
  auto it = registry().find(code);
  if (it != registry().end()) return it->second;
  char buf[16];
  std::snprintf(buf, sizeof buf, "Type0x%02x", code);
  return buf;
}

void register_sample_type(std::uint8_t code, std::string name) {
  std::lock_guard lock(registry_mu);
  registry()[code] = std::move(name);
}

Bytes encode_sample(const HealthSample& s) {
  TlvWriter w;
  write_sample(w, s);
  return w.take();
}

HealthSample decode_sample(ByteView body) {
  ByteReader r(body);
  HealthSample s;
  auto id = r.view(16);
  std::copy(id.begin(), id.end(), s.uuid.begin());
  s.sample_type = r.u8();
  s.unit = static_cast<Unit>(r.u8());
  s.value = r.f64();
  s.start_ms = r.u64();
  s.end_ms = r.u64();
  if (s.end_ms < s.start_ms) throw Error(Errc::Malformed, "sample ends before it starts");
  for (auto& f : split(r.rest())) {
    if (f.tag == tag::kSource) s.source = to_string(f.body);
    else if (f.tag == tag::kProvenance) s.provenance = to_string(f.body);
  }
  return s;
}

Bytes nanosync_encode(const NanoSyncMessage& msg) { return encode_impl(msg, nullptr); }

std::vector<std::size_t> insert_offsets(const NanoSyncMessage& msg) {
  std::vector<std::size_t> out;
  encode_impl(msg, &out);
  return out;
}

NanoSyncMessage nanosync_decode(ByteView data) {
  std::optional<NanoSyncMessage> out;
  for (auto& f : split(data)) {
    if (f.tag != tag::kChangeSet && f.tag != tag::kStatusReply) continue;
    if (out) throw Error(Errc::UnknownVariant, "more than one variant");
    if (f.tag == tag::kChangeSet) out = read_change_set(f.body);
    else out = read_status(f.body);
  }
  if (!out) throw Error(Errc::UnknownVariant, "no variant");
  return std::move(*out);
}

}  // namespace witchstack::nanosync
