#include "witchstack/harness/tap.hpp"

#include "witchstack/common/error.hpp"

namespace witchstack::harness {

EchoTap::EchoTap(const std::string& host, std::uint16_t port)
    : listener_(net::TcpListener::bind(host, port)) {
  thread_ = std::thread([this] {
    while (auto s = listener_.accept()) {
      ++connections_;
      auto conn = std::move(*s);
      try {
        for (;;) {
          auto chunk = conn.read_some(16384, std::chrono::seconds(10));
          if (chunk.empty()) break;
          received_ += chunk.size();
          conn.write_all(chunk);
        }
        conn.shutdown_write();
      } catch (const Error&) {
      }
    }
  });
}

EchoTap::~EchoTap() {
  listener_.close();
  if (thread_.joinable()) thread_.join();
}

}  // namespace witchstack::harness
