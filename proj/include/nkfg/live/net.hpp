#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "nkfg/live/shaper.hpp"
#include "nkfg/live/wire.hpp"

namespace nkfg::live {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.release();
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  int release() {
    const int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset();

 private:
  int fd_ = -1;
};

struct Listener {
  Fd fd;
  std::uint16_t port = 0;
};

// Binds 127.0.0.1 on `port` (0 picks a free one).
Listener listen_loopback(std::uint16_t port = 0);
// Returns an invalid Fd on timeout.
Fd accept_for(const Listener& listener, Micros timeout);
// Retries until `timeout`; throws Error naming `who` on failure.
Fd connect_loopback(std::uint16_t port, Micros timeout, const std::string& who);

bool write_all(int fd, const std::uint8_t* data, std::size_t n);
// Returns false on EOF or error before `n` bytes arrive.
bool read_exact(int fd, std::uint8_t* data, std::size_t n);
std::optional<WireFrame> read_frame(int fd);
bool write_frame(int fd, const WireFrame& frame);

// A framed connection with one receive loop and one send loop. Frames are
// handed to `on_frame` on the receive thread; `on_close` fires once when
// the peer goes away or the link is closed.
class Link {
 public:
  using FrameHandler = std::function<void(WireFrame)>;
  using CloseHandler = std::function<void()>;

  explicit Link(Fd fd);
  ~Link();
  Link(const Link&) = delete;
  Link& operator=(const Link&) = delete;

  // Outbound bytes pass through a shaper from now on.
  void shape(const ShaperConfig& config);
  ShapedSender* shaper() { return shaper_.get(); }

  void start(FrameHandler on_frame, CloseHandler on_close);
  void send(WireFrame frame);
  void send_text(FrameKind kind, const std::string& text, std::uint64_t seq = 0);
  // Blocks until the send queue is empty.
  void flush();
  void close();
  bool open() const { return !closed_; }
  int fd() const { return fd_.get(); }

 private:
  void read_loop();
  void write_loop();
  void fail();

  Fd fd_;
  std::unique_ptr<ShapedSender> shaper_;
  FrameHandler on_frame_;
  CloseHandler on_close_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<WireFrame> out_;
  bool writing_ = false;
  bool stop_ = false;
  std::atomic<bool> closed_{false};
  std::once_flag close_once_;
  std::thread reader_;
  std::thread writer_;
};

}  // namespace nkfg::live
