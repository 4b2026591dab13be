#include "witchstack/common/error.hpp"

namespace witchstack {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
#define WS_ERRC(name) \
  case Errc::name:    \
    return #name;
    WS_ERRC(PayloadTooLarge)
    WS_ERRC(ChecksumMismatch)
    WS_ERRC(TruncatedFrame)
    WS_ERRC(UnknownType)
    WS_ERRC(UnknownOpcode)
    WS_ERRC(ServiceRejected)
    WS_ERRC(Timeout)
    WS_ERRC(NotAPing)
    WS_ERRC(AuthFailure)
    WS_ERRC(NoCommonSuite)
    WS_ERRC(SequenceExhausted)
    WS_ERRC(AuthTagMismatch)
    WS_ERRC(ReplayDetected)
    WS_ERRC(StaleSequence)
    WS_ERRC(BadVersion)
    WS_ERRC(LengthMismatch)
    WS_ERRC(MalformedTlv)
    WS_ERRC(PeerUnresponsive)
    WS_ERRC(HelloTimeout)
    WS_ERRC(IncompatibleVersion)
    WS_ERRC(UnknownChannel)
    WS_ERRC(DuplicateOpen)
    WS_ERRC(FlagFieldReservedBitsSet)
    WS_ERRC(TopicMissing)
    WS_ERRC(SessionDown)
    WS_ERRC(PlaintextTooLarge)
    WS_ERRC(SignatureInvalid)
    WS_ERRC(OaepDecodeFailure)
    WS_ERRC(PaddingInvalid)
    WS_ERRC(TagInvalid)
    WS_ERRC(DecryptFailed)
    WS_ERRC(BlockOutOfRange)
    WS_ERRC(Malformed)
    WS_ERRC(UnknownVariant)
    WS_ERRC(PeerAhead)
    WS_ERRC(UnknownUuid)
    WS_ERRC(StoreLocked)
    WS_ERRC(StoreFailure)
    WS_ERRC(UnknownRequestType)
    WS_ERRC(ReservedBitsSet)
    WS_ERRC(DialFailure)
    WS_ERRC(FirewallBlocked)
    WS_ERRC(ConditionUnsatisfied)
    WS_ERRC(InvalidGlob)
    WS_ERRC(PortInUse)
    WS_ERRC(BadIdentityFile)
    WS_ERRC(ConnectFailure)
    WS_ERRC(HandshakeFailure)
    WS_ERRC(ScenarioUnknown)
    WS_ERRC(AssertionFailed)
    WS_ERRC(FileUnreadable)
    WS_ERRC(Io)
    WS_ERRC(Crypto)
#undef WS_ERRC
  }
  return "Unknown";
}

}  // namespace witchstack
