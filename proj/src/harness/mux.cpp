#include "witchstack/harness/mux.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>

namespace witchstack::harness {

std::string_view segment_kind_name(std::uint8_t k) noexcept {
  switch (k) {
    case 1: return "SYN";
    case 2: return "DATA";
    case 3: return "FIN";
    case 4: return "RST";
    default: return "UNKNOWN";
  }
}

Bytes encode_segment(const Segment& s) {
  ByteWriter w(kSegmentHeader + s.payload.size());
  w.u8(static_cast<std::uint8_t>(s.kind)).u32(s.conn).u16(s.port).raw(s.payload);
  return w.take();
}

Segment decode_segment(ByteView wire) {
  ByteReader r(wire);
  Segment s;
  auto k = r.u8();
  if (k < 1 || k > 4) throw Error(Errc::Malformed, "segment kind");
  s.kind = static_cast<SegmentKind>(k);
  s.conn = r.u32();
  s.port = r.u16();
  auto rest = r.rest();
  s.payload.assign(rest.begin(), rest.end());
  return s;
}

class MuxStream : public ByteStream, public std::enable_shared_from_this<MuxStream> {
 public:
  MuxStream(std::shared_ptr<InnerMux> mux, std::uint32_t conn, std::uint16_t port)
      : mux_(std::move(mux)), conn_(conn), port_(port) {}
  ~MuxStream() override { local_close(true); }

  void write(ByteView data) override {
    {
      std::lock_guard lk(mu_);
      if (write_closed_) throw Error(Errc::Io, "mux stream closed");
    }
    for (std::size_t off = 0; off < data.size(); off += kMaxSegmentPayload) {
      auto part = data.subspan(off, std::min(kMaxSegmentPayload, data.size() - off));
      mux_->send_segment(Segment{SegmentKind::Data, conn_, port_, Bytes(part.begin(), part.end())});
    }
  }

  std::optional<Bytes> read_exact(std::size_t n,
                                  std::optional<std::chrono::milliseconds> timeout) override {
    std::unique_lock lk(mu_);
    if (!wait(lk, timeout, [&] { return in_.size() >= n || read_closed_; }))
      throw Error(Errc::Timeout, "mux read");
    if (in_.size() < n) {
      if (in_.empty()) return std::nullopt;
      throw Error(Errc::Io, "mux stream closed mid-read");
    }
    return take(n);
  }

  Bytes read_some(std::size_t max, std::optional<std::chrono::milliseconds> timeout) override {
    std::unique_lock lk(mu_);
    if (!wait(lk, timeout, [&] { return !in_.empty() || read_closed_; }))
      throw Error(Errc::Timeout, "mux read");
    return take(std::min(max, in_.size()));
  }

  void shutdown_write() override {
    {
      std::lock_guard lk(mu_);
      if (write_closed_) return;
      write_closed_ = true;
    }
    try {
      mux_->send_segment(Segment{SegmentKind::Fin, conn_, port_, {}});
    } catch (const Error&) {
    }
  }

  void close() override { local_close(true); }

  void on_data(ByteView data) {
    {
      std::lock_guard lk(mu_);
      if (read_closed_) return;
      in_.insert(in_.end(), data.begin(), data.end());
    }
    cv_.notify_all();
  }
  void on_fin() {
    {
      std::lock_guard lk(mu_);
      read_closed_ = true;
    }
    cv_.notify_all();
  }
  void on_reset() {
    {
      std::lock_guard lk(mu_);
      read_closed_ = true;
      write_closed_ = true;
      reset_ = true;
    }
    cv_.notify_all();
  }

 private:
  template <typename Pred>
  bool wait(std::unique_lock<std::mutex>& lk, std::optional<std::chrono::milliseconds> timeout, Pred p) {
    if (timeout) return cv_.wait_for(lk, *timeout, p);
    cv_.wait(lk, p);
    return true;
  }

  Bytes take(std::size_t n) {
    Bytes out(in_.begin(), in_.begin() + static_cast<std::ptrdiff_t>(n));
    in_.erase(in_.begin(), in_.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  void local_close(bool send_rst) {
    bool notify_peer;
    {
      std::lock_guard lk(mu_);
      if (closed_) return;
      closed_ = true;
      notify_peer = send_rst && !reset_;
      read_closed_ = true;
      write_closed_ = true;
    }
    cv_.notify_all();
    if (notify_peer) {
      try {
        mux_->send_segment(Segment{SegmentKind::Rst, conn_, port_, {}});
      } catch (const Error&) {
      }
    }
    mux_->forget(conn_);
  }

  std::shared_ptr<InnerMux> mux_;
  std::uint32_t conn_;
  std::uint16_t port_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::uint8_t> in_;
  bool read_closed_ = false;
  bool write_closed_ = false;
  bool reset_ = false;
  bool closed_ = false;
};

InnerMux::InnerMux(Sender send, bool odd_ids) : send_(std::move(send)), next_id_(odd_ids ? 1 : 2) {}

InnerMux::~InnerMux() { shutdown(); }

void InnerMux::listen(std::uint16_t port, Acceptor on_accept) {
  std::lock_guard lock(mu_);
  listeners_[port] = std::move(on_accept);
}

StreamPtr InnerMux::open(std::uint16_t port) {
  std::shared_ptr<MuxStream> s;
  std::uint32_t id;
  {
    std::lock_guard lock(mu_);
    if (down_) throw Error(Errc::SessionDown, "tunnel down");
    id = next_id_;
    next_id_ += 2;
    s = std::make_shared<MuxStream>(shared_from_this(), id, port);
    conns_[id] = s;
  }
  send_segment(Segment{SegmentKind::Syn, id, port, {}});
  return s;
}

void InnerMux::deliver(ByteView wire) {
  Segment seg;
  try {
    seg = decode_segment(wire);
  } catch (const Error&) {
    return;
  }
  std::shared_ptr<MuxStream> s;
  Acceptor acceptor;
  {
    std::lock_guard lock(mu_);
    if (down_) return;
    auto it = conns_.find(seg.conn);
    if (it != conns_.end()) s = it->second.lock();
    if (!s && seg.kind == SegmentKind::Syn) {
      auto l = listeners_.find(seg.port);
      if (l != listeners_.end()) {
        s = std::make_shared<MuxStream>(shared_from_this(), seg.conn, seg.port);
        conns_[seg.conn] = s;
        acceptor = l->second;
      }
    }
  }
  if (!s) {
    if (seg.kind != SegmentKind::Rst) {
      try {
        send_segment(Segment{SegmentKind::Rst, seg.conn, seg.port, {}});
      } catch (const Error&) {
      }
    }
    return;
  }
  switch (seg.kind) {
    case SegmentKind::Syn:
      if (acceptor) acceptor(s);
      if (!seg.payload.empty()) s->on_data(seg.payload);
      break;
    case SegmentKind::Data: s->on_data(seg.payload); break;
    case SegmentKind::Fin: s->on_fin(); break;
    case SegmentKind::Rst: s->on_reset(); forget(seg.conn); break;
  }
}

void InnerMux::shutdown() {
  std::vector<std::shared_ptr<MuxStream>> live;
  down_ = true;
  { std::lock_guard wait_for_senders(send_mu_); }
  {
    std::lock_guard lock(mu_);
    for (auto& [id, w] : conns_)
      if (auto s = w.lock()) live.push_back(std::move(s));
    conns_.clear();
  }
  for (auto& s : live) s->on_reset();
}

std::size_t InnerMux::open_connections() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (auto& [id, w] : conns_)
    if (!w.expired()) ++n;
  return n;
}

void InnerMux::send_segment(const Segment& s) {
  std::lock_guard lock(send_mu_);
  if (down_) throw Error(Errc::SessionDown, "tunnel down");
  send_(encode_segment(s));
}

void InnerMux::forget(std::uint32_t conn) {
  std::lock_guard lock(mu_);
  conns_.erase(conn);
}

}  // namespace witchstack::harness
