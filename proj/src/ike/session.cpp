#include "witchstack/ike/session.hpp"

#include "witchstack/common/error.hpp"
#include "witchstack/crypto/crypto.hpp"
#include "witchstack/ike/ldm.hpp"

namespace witchstack::ike {

std::string_view effect_name(EffectKind k) noexcept {
  switch (k) {
    case EffectKind::PeerAddressUpdated: return "PeerAddressUpdated";
    case EffectKind::LinkPreferenceChanged: return "LinkPreferenceChanged";
    case EffectKind::ProxyEndpointUpdated: return "ProxyEndpointUpdated";
    case EffectKind::Restarted: return "Restarted";
    case EffectKind::SessionDown: return "SessionDown";
  }
  return "unknown";
}

void EffectQueue::push(NotifyEffect e) {
  {
    std::lock_guard lk(mu_);
    q_.push_back(std::move(e));
  }
  cv_.notify_all();
}

std::optional<NotifyEffect> EffectQueue::pop(std::chrono::milliseconds timeout) {
  std::unique_lock lk(mu_);
  if (!cv_.wait_for(lk, timeout, [&] { return !q_.empty(); })) return std::nullopt;
  NotifyEffect e = std::move(q_.front());
  q_.pop_front();
  return e;
}

std::optional<NotifyEffect> EffectQueue::try_pop() { return pop(std::chrono::milliseconds(0)); }

IkeSession::IkeSession(HandshakeResult hs, SecurityLog* log, KeepaliveConfig ka)
    : hs_(std::move(hs)), tunnel_(hs_.tunnel), log_(log), ka_(ka), local_wifi_(hs_.local_wifi) {
  crypto::Aead alg = aead_for(hs_.suite.encryption);
  const DirectionalKey& s = hs_.initiator ? hs_.keys.ike_i2r : hs_.keys.ike_r2i;
  const DirectionalKey& r = hs_.initiator ? hs_.keys.ike_r2i : hs_.keys.ike_i2r;
  send_cipher_ = {alg, s.key, s.salt};
  recv_cipher_ = {alg, r.key, r.salt};
  state_.peer = hs_.peer;
  state_.peer_wifi = hs_.peer_wifi;
  state_.proxy = hs_.proxy;
  state_.prelude = hs_.prelude_echo;
}

bool IkeSession::owns(std::uint64_t spi_i, std::uint64_t spi_r) const noexcept {
  return spi_i == hs_.spi_i && spi_r == hs_.spi_r;
}

void IkeSession::emit(std::vector<NotifyEffect>& out, NotifyEffect e) {
  queue_.push(e);
  out.push_back(std::move(e));
}

std::vector<NotifyEffect> IkeSession::process_notify(const IkeMessage& msg) {
  std::vector<NotifyEffect> out;
  auto notifies = msg.notifies();
  if (notifies.empty()) return out;
  if (!msg.is_encrypted && tunnel_.strict_notify_mode) {
    if (log_)
      log_->record(SecurityEventKind::UnauthenticatedNotify,
                   "class " + std::string(class_label(tunnel_.protection_class)) + ": " +
                       std::to_string(notifies.size()) + " notify payload(s) in unencrypted " +
                       "message ignored");
    return out;
  }
  auto flag = [](const Bytes& d) -> std::optional<bool> {
    if (d.size() != 1) return std::nullopt;
    return d[0] != 0;
  };
  for (const auto& n : notifies) {
    switch (n.notify_type) {
      case notify::kLinkDirectorMessage: {
        LinkDirectorMessage ldm;
        try {
          ldm = ldm_decode(n.data);
        } catch (const Error&) {
          ++unknown_notifies_;
          break;
        }
        for (const auto& t : ldm.tlvs) {
          if (auto a = tlv_address(t)) {
            if (state_.peer_wifi != a) {
              state_.peer_wifi = a;
              emit(out, {EffectKind::PeerAddressUpdated, a, a->to_string()});
            }
            continue;
          }
          switch (static_cast<LdmTlvType>(t.type)) {
            case LdmTlvType::Hello:
              ++state_.restarts;
              emit(out, {EffectKind::Restarted, std::nullopt, "peer restarted"});
              break;
            case LdmTlvType::PreferWiFi:
              if (!state_.prefer_wifi) {
                state_.prefer_wifi = true;
                emit(out, {EffectKind::LinkPreferenceChanged, std::nullopt, "prefer wifi"});
              }
              break;
            case LdmTlvType::DeviceLinkState:
              state_.peer_link_state = t.value[0];
              break;
            case LdmTlvType::PreferWiFiAck:
              state_.prefer_wifi_ack = t.value[0] != 0;
              break;
            case LdmTlvType::UpdateWiFiSignature:
              state_.wifi_signature = t.value;
              break;
            default:
              break;
          }
        }
        break;
      }
      case notify::kProxyNotify: {
        auto p = decode_proxy_endpoint(n.data);
        if (p && state_.proxy != p) {
          state_.proxy = p;
          emit(out, {EffectKind::ProxyEndpointUpdated, std::nullopt,
                     "[" + ipv6_to_string(p->address) + "]:" + std::to_string(p->port)});
        }
        break;
      }
      case notify::kEncryptedPrelude: state_.prelude = n.data; break;
      case notify::kTerminusVersion:
        if (n.data.size() == 2)
          state_.peer.terminus_version = static_cast<std::uint16_t>(n.data[0] << 8 | n.data[1]);
        break;
      case notify::kDeviceName: state_.peer.device_name = to_string(n.data); break;
      case notify::kBuildVersion: state_.peer.build_version = to_string(n.data); break;
      case notify::kAlwaysOnWifi: state_.always_on_wifi = flag(n.data); break;
      case notify::kIsAltAccountDevice: state_.alt_account = flag(n.data); break;
      default:
        if (!is_known_notify_type(n.notify_type)) ++unknown_notifies_;
        break;
    }
  }
  return out;
}

Bytes IkeSession::build(ExchangeType ex, bool response, std::uint32_t msg_id,
                        std::vector<IkePayload> payloads) {
  IkeMessage m;
  m.spi_i = hs_.spi_i;
  m.spi_r = hs_.spi_r;
  m.exchange_type = ex;
  m.from_initiator = hs_.initiator;
  m.is_response = response;
  m.msg_id = msg_id;
  m.is_encrypted = true;
  m.payloads = std::move(payloads);
  return ike_encode(m, &send_cipher_);
}

std::vector<IkePayload> IkeSession::address_payloads() const {
  std::vector<IkePayload> out;
  if (!local_wifi_) return out;
  LinkDirectorMessage ldm;
  ldm.identifier = {0, 0, 0, 0, 0, 0, 0, static_cast<std::uint8_t>(tunnel_.protection_class)};
  ldm.tlvs.push_back(address_tlv(*local_wifi_));
  out.push_back(make_notify(notify::kLinkDirectorMessage, ldm_encode(ldm)));
  return out;
}

IkeSession::Inbound IkeSession::handle(ByteView wire) {
  Inbound in;
  IkeHeader h;
  try {
    h = parse_ike_header(wire);
  } catch (const Error&) {
    return in;
  }
  if (!owns(h.spi_i, h.spi_r)) return in;
  IkeMessage msg;
  try {
    msg = ike_decode(wire, (h.flags & kFlagEncrypted) ? &recv_cipher_ : nullptr);
  } catch (const Error& e) {
    if (e.code() == Errc::AuthTagMismatch && log_)
      log_->record(SecurityEventKind::TamperDetected, std::string("ike: ") + e.what());
    return in;
  }
  if (msg.exchange_type != ExchangeType::Informational) return in;
  in.effects = process_notify(msg);
  if (!msg.is_encrypted) return in;
  if (msg.is_response) {
    outstanding_ = 0;
  } else {
    in.reply = build(ExchangeType::Informational, true, msg.msg_id, address_payloads());
  }
  return in;
}

Bytes IkeSession::keepalive_tick() {
  if (down_) throw Error(Errc::SessionDown);
  if (outstanding_ >= ka_.max_missed) {
    down_ = true;
    queue_.push({EffectKind::SessionDown, std::nullopt,
                 std::to_string(outstanding_) + " keepalives unanswered"});
    throw Error(Errc::PeerUnresponsive);
  }
  ++outstanding_;
  return build(ExchangeType::Informational, false, next_msg_id_++, address_payloads());
}

Bytes IkeSession::informational(std::vector<IkePayload> payloads) {
  return build(ExchangeType::Informational, false, next_msg_id_++, std::move(payloads));
}

Bytes IkeSession::state_hash() const {
  ByteWriter w;
  auto opt_addr = [&](const std::optional<WifiAddress>& a) {
    w.u8(a.has_value());
    if (a) {
      w.u8(a->is_v6);
      w.raw(a->ip);
      w.u16(a->port);
    }
  };
  auto opt_bool = [&](const std::optional<bool>& b) { w.u8(b ? (*b ? 2 : 1) : 0); };
  auto str = [&](const std::string& s) {
    w.u32(static_cast<std::uint32_t>(s.size()));
    w.raw(to_bytes(s));
  };
  opt_addr(state_.peer_wifi);
  opt_addr(local_wifi_);
  w.u8(state_.prefer_wifi);
  w.u8(state_.peer_link_state.value_or(0));
  opt_bool(state_.prefer_wifi_ack);
  w.u8(state_.proxy.has_value());
  if (state_.proxy) w.raw(encode_proxy_endpoint(*state_.proxy));
  w.u32(state_.restarts);
  opt_bool(state_.always_on_wifi);
  opt_bool(state_.alt_account);
  w.u8(state_.prelude.has_value());
  if (state_.prelude) {
    w.u32(static_cast<std::uint32_t>(state_.prelude->size()));
    w.raw(*state_.prelude);
  }
  w.u16(state_.peer.terminus_version);
  str(state_.peer.device_name);
  str(state_.peer.build_version);
  w.u32(static_cast<std::uint32_t>(state_.wifi_signature.size()));
  w.raw(state_.wifi_signature);
  w.u64(tunnel_.send_seq);
  w.u64(tunnel_.replay_window.highest());
  w.u64(tunnel_.replay_window.bitmap());
  w.u8(tunnel_.strict_notify_mode);
  w.u32(next_msg_id_);
  w.u32(static_cast<std::uint32_t>(outstanding_));
  w.u8(down_);
  return crypto::sha256(w.take());
}

}  // namespace witchstack::ike
