#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>

#include "witchstack/alloy/session.hpp"
#include "witchstack/harness/bus.hpp"
#include "witchstack/harness/engine.hpp"
#include "witchstack/harness/health_sync.hpp"
#include "witchstack/harness/identity.hpp"
#include "witchstack/harness/phone.hpp"
#include "witchstack/shoes/codec.hpp"

namespace witchstack::harness {

struct WatchOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string service = kLinkService;
  EngineOptions engine;
  aoverc::Mode health_mode = aoverc::Mode::Faithful;
  std::shared_ptr<link::TranscriptWriter> transcript;
  std::shared_ptr<alloy::AlloyTranscript> alloy_transcript;
  int connect_attempts = 5;
  std::chrono::milliseconds backoff{100};
  std::chrono::milliseconds reply_timeout{2000};
};

struct ShoesFetch {
  shoes::ShoesReply reply;
  Bytes received;
};

// Watch side: dials the phone, initiates both tunnels, opens the Alloy
// channels and pushes its health store to the phone.
class WatchEmulator {
 public:
  // Throws BadIdentityFile for a non-watch identity.
  WatchEmulator(Identity id, WatchOptions opt);
  ~WatchEmulator();
  WatchEmulator(const WatchEmulator&) = delete;
  WatchEmulator& operator=(const WatchEmulator&) = delete;

  // Errors: ConnectFailure after the retries, HandshakeFailure.
  void connect();
  void disconnect();

  std::shared_ptr<nanosync::HealthStore> store() const { return store_; }
  // Pushes every local change to the phone. False when the phone stopped
  // answering.
  bool sync_health();
  // Sends `upload`, half-closes and reads the whole response.
  ShoesFetch shoes_fetch(const shoes::ShoesRequest& request, ByteView upload,
                         std::chrono::milliseconds timeout = std::chrono::seconds(5));

  LinkEngine& engine() { return *engine_; }
  std::vector<std::string> channels() const { return hub_ ? hub_->names() : std::vector<std::string>{}; }
  const HealthSyncClient& health() const { return *health_; }
  void set_health_mode(aoverc::Mode m) { health_->set_mode(m); }

 private:
  std::optional<Bytes> exchange(Bytes record);
  void open_channel(const alloy::ChannelDescriptor& d);

  Identity id_;
  WatchOptions opt_;
  std::shared_ptr<nanosync::HealthStore> store_;
  std::unique_ptr<HealthSyncClient> health_;
  std::unique_ptr<LinkEngine> engine_;
  std::unique_ptr<alloy::ControlSession> control_;
  std::unique_ptr<AlloyHub> hub_;

  std::mutex reply_mu_;
  std::condition_variable reply_cv_;
  std::deque<alloy::Delivery> replies_;
};

}  // namespace witchstack::harness
