#include "witchstack/nanosync/store.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iterator>
#include <mutex>

#include "witchstack/crypto/crypto.hpp"

namespace witchstack::nanosync {

namespace {

constexpr std::string_view kMagic = "WWHS";
constexpr std::uint8_t kFormatVersion = 1;
constexpr std::size_t kSaltSize = 16;
constexpr std::size_t kHeaderSize = 4 + 1 + kSaltSize;

void write_str(ByteWriter& w, std::string_view s) {
  w.u32(static_cast<std::uint32_t>(s.size())).raw(s);
}

void write_blob(ByteWriter& w, ByteView b) { w.u32(static_cast<std::uint32_t>(b.size())).raw(b); }

Bytes encode_change(const NanoSyncChange& c) {
  return nanosync_encode(ChangeSet{SyncStatus::Done, false, {c}});
}

NanoSyncChange decode_change(ByteView b) {
  auto msg = nanosync_decode(b);
  auto* cs = std::get_if<ChangeSet>(&msg);
  if (!cs || cs->changes.size() != 1) throw Error(Errc::StoreFailure, "journal entry");
  return cs->changes.front();
}

Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::StoreFailure, "cannot read " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::optional<Bytes> PassphraseKeyProvider::key(ByteView salt) {
  if (locked_) return std::nullopt;
  return crypto::scrypt(passphrase_, salt, std::uint64_t{1} << params_.log2_n, params_.r,
                        params_.p, 32);
}

HealthStore::HealthStore() : open_(true) {}

HealthStore::HealthStore(std::filesystem::path path, std::shared_ptr<KeyProvider> keys)
    : path_(std::move(path)), keys_(std::move(keys)) {
  if (std::filesystem::exists(*path_)) {
    auto file = read_file(*path_);
    if (file.size() < kHeaderSize || !std::equal(kMagic.begin(), kMagic.end(), file.begin()))
      throw Error(Errc::StoreFailure, "not a health store");
    salt_.assign(file.begin() + 5, file.begin() + kHeaderSize);
  } else {
    salt_ = crypto::random_bytes(kSaltSize);
  }
  unlock_or_stay_locked();
}

void HealthStore::unlock_or_stay_locked() {
  key_ = keys_->key(salt_);
  if (!key_) return;
  if (std::filesystem::exists(*path_)) load_file();
  open_ = true;
}

bool HealthStore::locked() const {
  std::shared_lock lock(mu_);
  return !open_;
}

void HealthStore::lock() {
  if (!path_) return;
  save();
  std::unique_lock lock(mu_);
  rows_.clear();
  domains_.clear();
  key_.reset();
  open_ = false;
}

void HealthStore::unlock() {
  if (!path_) return;
  std::unique_lock lock(mu_);
  if (open_) return;
  unlock_or_stay_locked();
  if (!open_) throw Error(Errc::StoreLocked);
}

void HealthStore::require_open() const {
  if (!open_) throw Error(Errc::StoreLocked);
}

std::uint64_t HealthStore::now() const {
  if (clock_) return clock_();
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
}

SyncAnchor HealthStore::append_change(const std::string& domain, std::vector<HealthSample> inserts,
                                      std::vector<Deletion> deletes) {
  auto& d = domains_[domain];
  NanoSyncChange c;
  c.object_type = domain;
  c.start_anchor = {domain, d.journal.size()};
  c.end_anchor = {domain, d.journal.size() + 1};
  c.inserts = std::move(inserts);
  c.deletes = std::move(deletes);
  d.journal.push_back(std::move(c));
  return d.journal.back().end_anchor;
}

void HealthStore::rewrite_journal(const Uuid& uuid, const Deletion& as) {
  for (auto& [name, dom] : domains_) {
    for (auto& c : dom.journal) {
      auto ins = std::remove_if(c.inserts.begin(), c.inserts.end(),
                                [&](const HealthSample& s) { return s.uuid == uuid; });
      auto del = std::remove_if(c.deletes.begin(), c.deletes.end(),
                                [&](const Deletion& d) { return d.uuid == uuid; });
      bool touched = ins != c.inserts.end() || del != c.deletes.end();
      c.inserts.erase(ins, c.inserts.end());
      c.deletes.erase(del, c.deletes.end());
      if (touched) c.deletes.push_back(as);
    }
  }
}

void HealthStore::tombstone(const Deletion& d, const std::string& domain) {
  auto& row = rows_[d.uuid];
  row.sample_type = d.sample_type;
  row.deletion_ms = d.deletion_ms;
  row.live.reset();
  row.domain = domain;
  rewrite_journal(d.uuid, d);
}

void HealthStore::purge(const Uuid& uuid) {
  rows_.erase(uuid);
  rewrite_journal(uuid, Deletion{uuid, 0, 0, true});
}

SyncAnchor HealthStore::insert(std::vector<HealthSample> samples, const std::string& domain) {
  std::unique_lock lock(mu_);
  require_open();
  if (samples.empty()) throw Error(Errc::Malformed, "no samples");
  for (auto& s : samples)
    if (s.end_ms < s.start_ms) throw Error(Errc::Malformed, "sample ends before it starts");
  for (auto& s : samples) rows_[s.uuid] = Row{s.sample_type, s, 0, domain};
  return append_change(domain, std::move(samples), {});
}

SyncAnchor HealthStore::remove(const std::vector<Uuid>& uuids, const std::string& domain) {
  std::unique_lock lock(mu_);
  require_open();
  std::vector<Deletion> dels;
  for (auto& u : uuids) {
    auto it = rows_.find(u);
    if (it == rows_.end() || !it->second.live) throw Error(Errc::UnknownUuid, uuid_to_string(u));
    dels.push_back(Deletion{u, it->second.sample_type, now(), false});
  }
  if (dels.empty()) throw Error(Errc::UnknownUuid, "nothing to delete");
  auto anchor = append_change(domain, {}, dels);
  for (auto& d : dels) tombstone(d, domain);
  return anchor;
}

void HealthStore::hardened_delete(const Uuid& uuid) {
  {
    std::unique_lock lock(mu_);
    require_open();
    auto it = rows_.find(uuid);
    if (it == rows_.end()) throw Error(Errc::UnknownUuid, uuid_to_string(uuid));
    append_change(it->second.domain, {}, {Deletion{uuid, 0, 0, true}});
    purge(uuid);
  }
  save();
}

std::vector<StoredSample> HealthStore::query(const QueryFilter& f) const {
  std::shared_lock lock(mu_);
  require_open();
  std::vector<StoredSample> out;
  for (auto& [uuid, row] : rows_) {
    if (!row.live && !f.include_tombstones) continue;
    if (f.sample_type && row.sample_type != *f.sample_type) continue;
    std::uint64_t t = row.live ? row.live->start_ms : row.deletion_ms;
    if (f.from_ms && t < *f.from_ms) continue;
    if (f.to_ms && t >= *f.to_ms) continue;
    StoredSample s;
    s.uuid = uuid;
    s.sample_type = row.sample_type;
    if (row.live) {
      s.value = row.live->value;
      s.unit = row.live->unit;
      s.start_ms = row.live->start_ms;
      s.end_ms = row.live->end_ms;
      s.source = row.live->source;
      s.provenance = row.live->provenance;
    } else {
      s.deleted = true;
      s.deletion_ms = row.deletion_ms;
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const StoredSample& a, const StoredSample& b) {
    auto ta = a.start_ms.value_or(a.deletion_ms.value_or(0));
    auto tb = b.start_ms.value_or(b.deletion_ms.value_or(0));
    return std::tie(ta, a.uuid) < std::tie(tb, b.uuid);
  });
  return out;
}

std::vector<HealthSample> HealthStore::live_samples() const {
  std::shared_lock lock(mu_);
  require_open();
  std::vector<HealthSample> out;
  for (auto& [uuid, row] : rows_)
    if (row.live) out.push_back(*row.live);
  return out;
}

std::vector<SyncAnchor> HealthStore::anchors_locked() const {
  std::vector<SyncAnchor> out;
  for (auto& [name, d] : domains_) out.push_back({name, d.journal.size()});
  return out;
}

std::vector<SyncAnchor> HealthStore::anchors() const {
  std::shared_lock lock(mu_);
  require_open();
  return anchors_locked();
}

std::uint64_t HealthStore::anchor(const std::string& domain) const {
  std::shared_lock lock(mu_);
  require_open();
  auto it = domains_.find(domain);
  return it == domains_.end() ? 0 : it->second.journal.size();
}

std::size_t HealthStore::held_back() const {
  std::shared_lock lock(mu_);
  std::size_t n = 0;
  for (auto& [name, d] : domains_) n += d.held.size();
  return n;
}

ChangeSet HealthStore::produce_changes(const std::vector<SyncAnchor>& peer_anchors,
                                       std::size_t batch) const {
  std::shared_lock lock(mu_);
  require_open();
  std::map<std::string, std::uint64_t> peer;
  for (auto& a : peer_anchors) peer[a.domain] = std::max(peer[a.domain], a.value);
  for (auto& [name, value] : peer) {
    auto it = domains_.find(name);
    std::uint64_t local = it == domains_.end() ? 0 : it->second.journal.size();
    if (value > local)
      throw Error(Errc::PeerAhead, name + " peer " + std::to_string(value) + " local " +
                                       std::to_string(local));
  }
  ChangeSet cs;
  cs.status = SyncStatus::Done;
  for (auto& [name, d] : domains_) {
    auto from = peer.count(name) ? peer[name] : 0;
    for (auto i = from; i < d.journal.size(); ++i) {
      if (cs.changes.size() == batch) {
        cs.status = SyncStatus::Continue;
        return cs;
      }
      cs.changes.push_back(d.journal[i]);
    }
  }
  return cs;
}

ChangeSet HealthStore::produce_reset(std::size_t batch) const {
  auto cs = produce_changes({}, batch);
  cs.reset = true;
  return cs;
}

void HealthStore::apply_one(const NanoSyncChange& c) {
  domains_[c.object_type].journal.push_back(c);
  for (auto& s : c.inserts) rows_[s.uuid] = Row{s.sample_type, s, 0, c.object_type};
  for (auto& d : c.deletes) {
    if (d.purge) purge(d.uuid);
    else tombstone(d, c.object_type);
  }
}

ApplyResult HealthStore::apply_changes(const ChangeSet& cs) {
  std::unique_lock lock(mu_);
  require_open();
  ApplyResult res;
  if (cs.reset) {
    rows_.clear();
    domains_.clear();
    ++resyncs_;
    if (warn_) warn_("peer requested full resync, local health state wiped");
  }
  for (auto& c : cs.changes) {
    auto& d = domains_[c.object_type];
    auto cur = d.journal.size();
    if (c.start_anchor.value < cur) {
      ++res.duplicates;
    } else if (c.start_anchor.value > cur) {
      if (d.held.size() < kMaxHeldBack) d.held.emplace(c.start_anchor.value, c);
      ++res.held_back;
    } else {
      apply_one(c);
      ++res.applied;
      auto& dom = domains_[c.object_type];
      while (!dom.held.empty() && dom.held.begin()->first <= dom.journal.size()) {
        auto node = dom.held.extract(dom.held.begin());
        if (node.key() == dom.journal.size()) {
          apply_one(node.mapped());
          ++res.applied;
        }
      }
    }
  }
  res.reply.anchors = anchors_locked();
  return res;
}

Bytes HealthStore::serialize_plain() const {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(domains_.size()));
  for (auto& [name, d] : domains_) {
    write_str(w, name);
    w.u32(static_cast<std::uint32_t>(d.journal.size()));
    for (auto& c : d.journal) write_blob(w, encode_change(c));
    w.u32(static_cast<std::uint32_t>(d.held.size()));
    for (auto& [anchor, c] : d.held) write_blob(w, encode_change(c));
  }
  w.u32(static_cast<std::uint32_t>(rows_.size()));
  for (auto& [uuid, row] : rows_) {
    w.raw(uuid).u8(row.sample_type).u64(row.deletion_ms);
    write_str(w, row.domain);
    w.u8(row.live ? 1 : 0);
    if (row.live) write_blob(w, encode_sample(*row.live));
  }
  return w.take();
}

void HealthStore::load_plain(ByteView body) {
  ByteReader r(body, Errc::StoreFailure);
  decltype(domains_) domains;
  decltype(rows_) rows;
  for (auto n = r.u32(); n > 0; --n) {
    auto name = r.string(r.u32());
    auto& d = domains[name];
    for (auto j = r.u32(); j > 0; --j) d.journal.push_back(decode_change(r.view(r.u32())));
    for (auto h = r.u32(); h > 0; --h) {
      auto c = decode_change(r.view(r.u32()));
      d.held.emplace(c.start_anchor.value, std::move(c));
    }
  }
  for (auto n = r.u32(); n > 0; --n) {
    Uuid uuid;
    auto id = r.view(16);
    std::copy(id.begin(), id.end(), uuid.begin());
    Row row;
    row.sample_type = r.u8();
    row.deletion_ms = r.u64();
    row.domain = r.string(r.u32());
    if (r.u8()) row.live = decode_sample(r.view(r.u32()));
    rows[uuid] = std::move(row);
  }
  domains_ = std::move(domains);
  rows_ = std::move(rows);
}

Bytes HealthStore::serialize_sealed() const {
  std::shared_lock lock(mu_);
  require_open();
  if (!key_) throw Error(Errc::StoreFailure, "in-memory store has no key");
  ByteWriter header;
  header.raw(kMagic).u8(kFormatVersion).raw(salt_);
  auto nonce = crypto::random_bytes(crypto::kAeadNonceSize);
  auto sealed = crypto::aead_seal(crypto::Aead::Aes256Gcm, *key_, nonce, header.bytes(),
                                  serialize_plain());
  Bytes out = header.take();
  append(out, nonce);
  append(out, sealed);
  return out;
}

void HealthStore::load_file() {
  auto file = read_file(*path_);
  if (file.size() < kHeaderSize + crypto::kAeadNonceSize + crypto::kAeadTagSize)
    throw Error(Errc::StoreFailure, "truncated store");
  if (file[4] != kFormatVersion) throw Error(Errc::StoreFailure, "store version");
  ByteView v(file);
  auto plain = crypto::aead_open(crypto::Aead::Aes256Gcm, *key_,
                                 v.subspan(kHeaderSize, crypto::kAeadNonceSize),
                                 v.first(kHeaderSize),
                                 v.subspan(kHeaderSize + crypto::kAeadNonceSize));
  if (!plain) throw Error(Errc::StoreFailure, "wrong key or corrupted store");
  load_plain(*plain);
}

void HealthStore::save() {
  if (!path_) return;
  auto image = serialize_sealed();
  auto tmp = *path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::StoreFailure, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(image.data()),
              static_cast<std::streamsize>(image.size()));
    if (!out) throw Error(Errc::StoreFailure, "short write");
  }
  std::filesystem::rename(tmp, *path_);
}

}  // namespace witchstack::nanosync
