#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <thread>
#include <vector>

#include "nkfg/units.hpp"

namespace nkfg::live {

// Microseconds on the system-wide monotonic clock, comparable across
// processes on one host.
Micros mono_now();

struct ShaperConfig {
  double rate_mbps = 20.0;
  double burst_mb = 0.01;  // megabits
  double added_latency_ms = 0.0;

  void validate() const;
};

// Token bucket with a one-second sliding ceiling. Reservations are granted
// in order; the bits granted inside any one-second window never exceed the
// rate, and a payload larger than the burst drains at the rate.
class TokenBucket {
 public:
  TokenBucket(const ShaperConfig& config, Micros now, bool start_full = false);

  // Earliest time >= now at which `bits` may leave; the tokens are taken.
  Micros reserve(std::uint64_t bits, Micros now);
  void reconfigure(const ShaperConfig& config, Micros now);

  std::uint64_t chunk_bits() const;
  const ShaperConfig& config() const { return config_; }

 private:
  double level_at(Micros t) const;

  ShaperConfig config_;
  double tokens_ = 0.0;
  Micros last_{0};
  Micros floor_{0};
  std::deque<std::pair<Micros, std::uint64_t>> window_;
  std::uint64_t window_bits_ = 0;
};

struct Grant {
  Micros at{0};
  std::uint64_t bits = 0;
};

// A socket writer that paces bytes through a TokenBucket and delays each
// chunk by the added latency before it reaches the wire.
class ShapedSender {
 public:
  ShapedSender(int fd, const ShaperConfig& config, bool start_full = false);
  ~ShapedSender();
  ShapedSender(const ShapedSender&) = delete;
  ShapedSender& operator=(const ShapedSender&) = delete;

  // Blocks until every chunk of `bytes` has been granted tokens. Returns
  // false once the socket has failed.
  bool send(const std::vector<std::uint8_t>& bytes);
  void reconfigure(const ShaperConfig& config);
  ShaperConfig config() const;

  std::vector<Grant> grants() const;
  // Bytes that have reached the socket.
  std::uint64_t delivered_bytes() const;
  // Waits until the delay line is empty.
  void flush();

 private:
  void delay_loop();

  int fd_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  TokenBucket bucket_;
  struct Pending {
    Micros due;
    std::vector<std::uint8_t> bytes;
  };
  std::deque<Pending> line_;
  std::vector<Grant> grants_;
  std::uint64_t delivered_ = 0;
  bool stop_ = false;
  bool failed_ = false;
  std::mutex send_mu_;
  std::thread thread_;
};

}  // namespace nkfg::live
