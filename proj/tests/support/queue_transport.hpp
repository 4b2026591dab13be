#pragma once

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>

#include "witchstack/common/error.hpp"
#include "witchstack/ike/handshake.hpp"

namespace witchstack::testing {

struct Mailbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> q;
};

// In-memory duplex IKE transport; one end's send is the other's receive.
class QueueTransport : public ike::IkeTransport {
 public:
  QueueTransport(std::shared_ptr<Mailbox> in, std::shared_ptr<Mailbox> out)
      : in_(std::move(in)), out_(std::move(out)) {}

  void send(Bytes m) override {
    {
      std::lock_guard lk(out_->mu);
      out_->q.push_back(std::move(m));
    }
    out_->cv.notify_all();
  }

  Bytes receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lk(in_->mu);
    if (!in_->cv.wait_for(lk, timeout, [&] { return !in_->q.empty(); }))
      throw Error(Errc::Timeout, "ike receive");
    Bytes m = std::move(in_->q.front());
    in_->q.pop_front();
    return m;
  }

 private:
  std::shared_ptr<Mailbox> in_, out_;
};

inline std::pair<QueueTransport, QueueTransport> transport_pair() {
  auto a = std::make_shared<Mailbox>();
  auto b = std::make_shared<Mailbox>();
  return {QueueTransport(a, b), QueueTransport(b, a)};
}

}  // namespace witchstack::testing
