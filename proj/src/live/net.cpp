#include "nkfg/live/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "nkfg/error.hpp"

namespace nkfg::live {

void Fd::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

namespace {

sockaddr_in loopback(std::uint16_t port) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(port);
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return a;
}

void no_delay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Listener listen_loopback(std::uint16_t port) {
  Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) throw Error(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto addr = loopback(port);
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw Error("bind 127.0.0.1:" + std::to_string(port) + ": " + std::strerror(errno));
  }
  if (::listen(fd.get(), 16) != 0) throw Error(std::string("listen: ") + std::strerror(errno));
  socklen_t len = sizeof addr;
  ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  return {std::move(fd), ntohs(addr.sin_port)};
}

Fd accept_for(const Listener& listener, Micros timeout) {
  pollfd p{listener.fd.get(), POLLIN, 0};
  const int ms = static_cast<int>(timeout.count() / 1000);
  int r;
  do {
    r = ::poll(&p, 1, ms);
  } while (r < 0 && errno == EINTR);
  if (r <= 0) return {};
  Fd fd(::accept4(listener.fd.get(), nullptr, nullptr, SOCK_CLOEXEC));
  if (fd) no_delay(fd.get());
  return fd;
}

Fd connect_loopback(std::uint16_t port, Micros timeout, const std::string& who) {
  const auto deadline = mono_now() + timeout;
  while (true) {
    Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    auto addr = loopback(port);
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
      no_delay(fd.get());
      return fd;
    }
    if (mono_now() >= deadline) {
      throw Error(who + ": cannot connect to 127.0.0.1:" + std::to_string(port) + ": " +
                  std::strerror(errno));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const auto r = ::send(fd, data, n, MSG_NOSIGNAL);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

bool read_exact(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const auto r = ::recv(fd, data, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

std::optional<WireFrame> read_frame(int fd) {
  std::vector<std::uint8_t> buf(kHeaderSize);
  if (!read_exact(fd, buf.data(), kHeaderSize)) return std::nullopt;
  const auto h = decode_header(buf);
  buf.resize(kHeaderSize + h.payload_len);
  if (h.payload_len > 0 && !read_exact(fd, buf.data() + kHeaderSize, h.payload_len)) return std::nullopt;
  return decode(buf);
}

bool write_frame(int fd, const WireFrame& frame) {
  const auto bytes = encode(frame);
  return write_all(fd, bytes.data(), bytes.size());
}

Link::Link(Fd fd) : fd_(std::move(fd)) {}

Link::~Link() {
  close();
  if (reader_.joinable()) reader_.join();
  if (writer_.joinable()) writer_.join();
}

void Link::shape(const ShaperConfig& config) {
  std::lock_guard lock(mu_);
  if (shaper_) shaper_->reconfigure(config);
  else shaper_ = std::make_unique<ShapedSender>(fd_.get(), config);
}

void Link::start(FrameHandler on_frame, CloseHandler on_close) {
  on_frame_ = std::move(on_frame);
  on_close_ = std::move(on_close);
  reader_ = std::thread([this] { read_loop(); });
  writer_ = std::thread([this] { write_loop(); });
}

void Link::send(WireFrame frame) {
  {
    std::lock_guard lock(mu_);
    if (stop_) return;
    out_.push_back(std::move(frame));
  }
  cv_.notify_all();
}

void Link::send_text(FrameKind kind, const std::string& text, std::uint64_t seq) {
  send(WireFrame::with_text(kind, seq, static_cast<std::uint64_t>(mono_now().count()), text));
}

void Link::flush() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return (out_.empty() && !writing_) || stop_; });
  if (shaper_) {
    auto* s = shaper_.get();
    lock.unlock();
    s->flush();
  }
}

void Link::close() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (fd_) ::shutdown(fd_.get(), SHUT_RDWR);
  fail();
}

void Link::fail() {
  std::call_once(close_once_, [this] {
    closed_ = true;
    if (on_close_) on_close_();
  });
}

void Link::read_loop() {
  try {
    while (auto frame = read_frame(fd_.get())) {
      if (on_frame_) on_frame_(std::move(*frame));
    }
  } catch (const std::exception&) {
  }
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  fail();
}

void Link::write_loop() {
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [&] { return stop_ || !out_.empty(); });
    if (stop_) return;
    auto frame = std::move(out_.front());
    out_.pop_front();
    writing_ = true;
    auto* shaper = shaper_.get();
    lock.unlock();
    const auto bytes = encode(frame);
    const bool ok = shaper ? shaper->send(bytes) : write_all(fd_.get(), bytes.data(), bytes.size());
    lock.lock();
    writing_ = false;
    cv_.notify_all();
    if (!ok) {
      stop_ = true;
      lock.unlock();
      ::shutdown(fd_.get(), SHUT_RDWR);
      fail();
      return;
    }
  }
}

}  // namespace nkfg::live
