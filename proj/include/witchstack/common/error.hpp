#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace witchstack {

// Every failure the stack can report. Grouped by the layer that raises it.
enum class Errc {
  // link framing
  PayloadTooLarge,
  ChecksumMismatch,
  TruncatedFrame,
  UnknownType,
  UnknownOpcode,
  ServiceRejected,
  Timeout,
  NotAPing,
  // ike / tunnel
  AuthFailure,
  NoCommonSuite,
  SequenceExhausted,
  AuthTagMismatch,
  ReplayDetected,
  StaleSequence,
  BadVersion,
  LengthMismatch,
  MalformedTlv,
  PeerUnresponsive,
  // alloy
  HelloTimeout,
  IncompatibleVersion,
  UnknownChannel,
  DuplicateOpen,
  FlagFieldReservedBitsSet,
  TopicMissing,
  SessionDown,
  // aoverc
  PlaintextTooLarge,
  SignatureInvalid,
  OaepDecodeFailure,
  PaddingInvalid,
  TagInvalid,
  DecryptFailed,
  BlockOutOfRange,
  // nanosync
  Malformed,
  UnknownVariant,
  PeerAhead,
  UnknownUuid,
  StoreLocked,
  StoreFailure,
  // shoes / firewall
  UnknownRequestType,
  ReservedBitsSet,
  DialFailure,
  FirewallBlocked,
  ConditionUnsatisfied,
  InvalidGlob,
  // harness
  PortInUse,
  BadIdentityFile,
  ConnectFailure,
  HandshakeFailure,
  ScenarioUnknown,
  AssertionFailed,
  FileUnreadable,
  Io,
  Crypto,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) +
                           (detail.empty() ? "" : ": " + detail)),
        code_(code) {}
  explicit Error(Errc code) : Error(code, "") {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace witchstack
