#include "witchstack/harness/health_sync.hpp"

#include "witchstack/common/error.hpp"

namespace witchstack::harness {

Bytes seal_health(const aoverc::Keyring& keys, const nanosync::NanoSyncMessage& msg, aoverc::Mode mode) {
  return aoverc::encode_record(aoverc::encrypt(keys, nanosync::nanosync_encode(msg), mode));
}

nanosync::NanoSyncMessage open_health(const aoverc::Keyring& keys, ByteView record, aoverc::Mode mode) {
  auto env = aoverc::decode_record(record);
  return nanosync::nanosync_decode(aoverc::decrypt_detailed(keys, env, mode));
}

HealthSyncServer::HealthSyncServer(std::shared_ptr<nanosync::HealthStore> store, aoverc::Keyring keys,
                                   aoverc::Mode mode, std::shared_ptr<SecurityLog> log)
    : store_(std::move(store)), keys_(std::move(keys)), mode_(mode), log_(std::move(log)) {}

std::optional<Bytes> HealthSyncServer::handle(ByteView record) {
  ++received_;
  aoverc::Mode mode = mode_;
  Bytes plain;
  try {
    plain = aoverc::decrypt_detailed(keys_, aoverc::decode_record(record), mode);
  } catch (const Error& e) {
    ++rejected_;
    if (log_ && e.code() != Errc::Malformed)
      log_->record(SecurityEventKind::TamperDetected, std::string("health envelope rejected: ") + e.what());
    return std::nullopt;
  }
  nanosync::NanoSyncMessage msg;
  try {
    msg = nanosync::nanosync_decode(plain);
  } catch (const Error&) {
    ++rejected_;
    return std::nullopt;
  }
  auto* cs = std::get_if<nanosync::ChangeSet>(&msg);
  if (!cs) {
    ++rejected_;
    return std::nullopt;
  }
  nanosync::ApplyResult res;
  try {
    res = store_->apply_changes(*cs);
  } catch (const Error&) {
    ++rejected_;
    return std::nullopt;
  }
  applied_ += res.applied;
  if (on_applied_) on_applied_(*cs, res);
  return seal_health(keys_, res.reply, mode);
}

HealthSyncClient::HealthSyncClient(std::shared_ptr<nanosync::HealthStore> store, aoverc::Keyring keys,
                                   aoverc::Mode mode)
    : store_(std::move(store)), keys_(std::move(keys)), mode_(mode) {}

bool HealthSyncClient::sync(const Exchange& exchange, int max_attempts, std::size_t batch) {
  bool first = true;
  for (;;) {
    nanosync::ChangeSet cs;
    try {
      cs = store_->produce_changes(acked_, batch);
    } catch (const Error& e) {
      if (e.code() != Errc::PeerAhead) throw;
      cs = store_->produce_reset(batch);
    }
    if (cs.changes.empty() && !first) return true;
    first = false;
    Bytes request = seal_health(keys_, cs, mode_);
    std::optional<nanosync::StatusReply> reply;
    for (int attempt = 0; attempt < max_attempts && !reply; ++attempt) {
      if (attempt > 0) {
        ++retries_;
        request = seal_health(keys_, cs, mode_);
      }
      auto raw = exchange(request);
      if (!raw) continue;
      try {
        auto msg = open_health(keys_, *raw, mode_);
        if (auto* r = std::get_if<nanosync::StatusReply>(&msg)) reply = *r;
      } catch (const Error&) {
      }
    }
    if (!reply) return false;
    ++rounds_;
    acked_ = reply->anchors;
  }
}

}  // namespace witchstack::harness
