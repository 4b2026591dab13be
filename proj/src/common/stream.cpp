#include "witchstack/common/stream.hpp"

#include <condition_variable>
#include <algorithm>
#include <deque>
#include <mutex>

#include "witchstack/common/error.hpp"

namespace witchstack {

namespace {

struct Buffer {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> data;
  bool closed = false;
};

class PipeEnd : public ByteStream {
 public:
  PipeEnd(std::shared_ptr<Buffer> in, std::shared_ptr<Buffer> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeEnd() override { close(); }

  void write(ByteView data) override {
    {
      std::lock_guard lk(out_->mu);
      if (out_->closed) throw Error(Errc::Io, "pipe closed");
      out_->data.insert(out_->data.end(), data.begin(), data.end());
    }
    out_->cv.notify_all();
  }

  std::optional<Bytes> read_exact(std::size_t n,
                                  std::optional<std::chrono::milliseconds> timeout) override {
    std::unique_lock lk(in_->mu);
    auto ready = [&] { return in_->data.size() >= n || in_->closed; };
    if (timeout) {
      if (!in_->cv.wait_for(lk, *timeout, ready)) throw Error(Errc::Timeout, "pipe read");
    } else {
      in_->cv.wait(lk, ready);
    }
    if (in_->data.size() < n) {
      if (in_->data.empty()) return std::nullopt;
      throw Error(Errc::Io, "pipe closed mid-read");
    }
    Bytes out(in_->data.begin(), in_->data.begin() + static_cast<std::ptrdiff_t>(n));
    in_->data.erase(in_->data.begin(), in_->data.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  Bytes read_some(std::size_t max, std::optional<std::chrono::milliseconds> timeout) override {
    std::unique_lock lk(in_->mu);
    auto ready = [&] { return !in_->data.empty() || in_->closed; };
    if (timeout) {
      if (!in_->cv.wait_for(lk, *timeout, ready)) throw Error(Errc::Timeout, "pipe read");
    } else {
      in_->cv.wait(lk, ready);
    }
    auto n = std::min(max, in_->data.size());
    Bytes out(in_->data.begin(), in_->data.begin() + static_cast<std::ptrdiff_t>(n));
    in_->data.erase(in_->data.begin(), in_->data.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  void shutdown_write() override {
    {
      std::lock_guard lk(out_->mu);
      out_->closed = true;
    }
    out_->cv.notify_all();
  }

  void close() override {
    for (auto& b : {in_, out_}) {
      {
        std::lock_guard lk(b->mu);
        b->closed = true;
      }
      b->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<Buffer> in_, out_;
};

}  // namespace

std::pair<StreamPtr, StreamPtr> make_pipe() {
  auto a = std::make_shared<Buffer>();
  auto b = std::make_shared<Buffer>();
  return {std::make_shared<PipeEnd>(a, b), std::make_shared<PipeEnd>(b, a)};
}

}  // namespace witchstack
