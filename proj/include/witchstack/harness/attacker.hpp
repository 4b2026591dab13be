#pragma once

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "witchstack/common/net.hpp"
#include "witchstack/link/nrlp.hpp"
#include "witchstack/link/transcript.hpp"

namespace witchstack::harness {

// On-path attacker spliced into the virtual link. It relays link frames
// between the watch and the phone and may drop, replace or add NRLP frames
// once service negotiation is over.
class LinkAttacker {
 public:
  // nullopt forwards the frame untouched; otherwise the listed frames are sent
  // in its place (an empty list drops it).
  using Hook = std::function<std::optional<std::vector<link::NrlpFrame>>(link::Direction,
                                                                       const link::NrlpFrame&)>;

  LinkAttacker(std::string phone_host, std::uint16_t phone_port);
  ~LinkAttacker();
  LinkAttacker(const LinkAttacker&) = delete;
  LinkAttacker& operator=(const LinkAttacker&) = delete;

  void start();
  void stop();
  // Where the watch should connect.
  std::uint16_t port() const { return listener_.port(); }
  void set_hook(Hook h);

  // UDP sink for redirected traffic.
  std::uint16_t sink_port() const { return sink_.port(); }
  std::uint64_t sink_datagrams() const { return sink_count_; }
  std::vector<Bytes> sink_payloads() const;

  std::uint64_t frames_relayed() const { return relayed_; }
  std::uint64_t frames_altered() const { return altered_; }

 private:
  struct Splice;
  void accept_loop();
  void pump(std::shared_ptr<Splice> sp, link::Direction dir);

  std::string phone_host_;
  std::uint16_t phone_port_;
  net::TcpListener listener_;
  net::UdpSocket sink_;
  std::mutex hook_mu_;
  Hook hook_;
  mutable std::mutex sink_mu_;
  std::vector<Bytes> sink_payloads_;
  std::atomic<std::uint64_t> sink_count_{0};
  std::atomic<std::uint64_t> relayed_{0};
  std::atomic<std::uint64_t> altered_{0};
  std::atomic<bool> stopping_{false};
  std::mutex splices_mu_;
  std::list<std::shared_ptr<Splice>> splices_;
  std::vector<std::thread> threads_;
  std::thread acceptor_;
  std::thread sink_thread_;
};

}  // namespace witchstack::harness
