#include "nkfg/live/shaper.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>

#include "nkfg/error.hpp"

namespace nkfg::live {

namespace {

constexpr Micros kWindow{1'000'000};
constexpr std::size_t kMaxGrantLog = 1'000'000;

}  // namespace

Micros mono_now() {
  return std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now().time_since_epoch());
}

void ShaperConfig::validate() const {
  if (!(rate_mbps > 0.0) || !std::isfinite(rate_mbps)) throw ValidationError("shaper: rate must be > 0");
  if (!(burst_mb > 0.0) || !std::isfinite(burst_mb)) throw ValidationError("shaper: burst must be > 0");
  if (!(added_latency_ms >= 0.0) || !std::isfinite(added_latency_ms)) {
    throw ValidationError("shaper: added latency must be >= 0");
  }
}

TokenBucket::TokenBucket(const ShaperConfig& config, Micros now, bool start_full)
    : config_(config), last_(now), floor_(now) {
  config_.validate();
  if (start_full) tokens_ = config_.burst_mb * 1e6;
}

double TokenBucket::level_at(Micros t) const {
  const double cap = config_.burst_mb * 1e6;
  const double gained = config_.rate_mbps * static_cast<double>((t - last_).count());
  return std::min(cap, tokens_ + gained);
}

std::uint64_t TokenBucket::chunk_bits() const {
  const auto burst = static_cast<std::uint64_t>(std::floor(config_.burst_mb * 1e6));
  const std::uint64_t ceiling = std::min<std::uint64_t>(
      static_cast<std::uint64_t>(std::floor(config_.rate_mbps * 1e6)), 64 * 1024 * 8);
  return std::max<std::uint64_t>(8, std::min(burst, ceiling) / 8 * 8);
}

Micros TokenBucket::reserve(std::uint64_t bits, Micros now) {
  const double cap = config_.burst_mb * 1e6;
  const double ceiling = config_.rate_mbps * 1e6;
  if (static_cast<double>(bits) > cap || static_cast<double>(bits) > ceiling) {
    throw ValidationError("shaper: reservation larger than the bucket");
  }
  Micros t = std::max({now, floor_, last_});
  const double level = level_at(t);
  if (level < static_cast<double>(bits)) {
    const double wait = (static_cast<double>(bits) - level) / config_.rate_mbps;
    t += Micros{static_cast<std::int64_t>(std::ceil(wait))};
  }
  // Sliding ceiling: bits granted in (t - 1 s, t] stay within the rate.
  auto expire = [&](Micros at) {
    while (!window_.empty() && window_.front().first <= at - kWindow) {
      window_bits_ -= window_.front().second;
      window_.pop_front();
    }
  };
  expire(t);
  while (static_cast<double>(window_bits_ + bits) > ceiling) {
    t = std::max(t, window_.front().first + kWindow);
    expire(t);
  }
  tokens_ = level_at(t) - static_cast<double>(bits);
  last_ = t;
  floor_ = t;
  window_.emplace_back(t, bits);
  window_bits_ += bits;
  return t;
}

void TokenBucket::reconfigure(const ShaperConfig& config, Micros now) {
  config.validate();
  tokens_ = level_at(std::max(now, last_));
  last_ = std::max(now, last_);
  config_ = config;
  tokens_ = std::min(tokens_, config_.burst_mb * 1e6);
}

ShapedSender::ShapedSender(int fd, const ShaperConfig& config, bool start_full)
    : fd_(fd), bucket_(config, mono_now(), start_full) {
  thread_ = std::thread([this] { delay_loop(); });
}

ShapedSender::~ShapedSender() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

bool ShapedSender::send(const std::vector<std::uint8_t>& bytes) {
  std::lock_guard serial(send_mu_);
  std::unique_lock lock(mu_);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    if (failed_ || stop_) return false;
    const auto n = std::min<std::size_t>(bucket_.chunk_bits() / 8, bytes.size() - offset);
    const auto grant = bucket_.reserve(n * 8, mono_now());
    if (grants_.size() < kMaxGrantLog) grants_.push_back({grant, n * 8});
    const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(offset);
    line_.push_back({grant + round_micros(bucket_.config().added_latency_ms),
                     {first, first + static_cast<std::ptrdiff_t>(n)}});
    cv_.notify_all();
    offset += n;
    const auto wait = grant - mono_now();
    if (wait.count() > 0) {
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }
  return !failed_;
}

void ShapedSender::reconfigure(const ShaperConfig& config) {
  std::lock_guard lock(mu_);
  bucket_.reconfigure(config, mono_now());
}

ShaperConfig ShapedSender::config() const {
  std::lock_guard lock(mu_);
  return bucket_.config();
}

std::vector<Grant> ShapedSender::grants() const {
  std::lock_guard lock(mu_);
  return grants_;
}

std::uint64_t ShapedSender::delivered_bytes() const {
  std::lock_guard lock(mu_);
  return delivered_;
}

void ShapedSender::flush() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return line_.empty() || failed_ || stop_; });
}

void ShapedSender::delay_loop() {
  std::unique_lock lock(mu_);
  while (true) {
    if (stop_) return;
    if (line_.empty()) {
      cv_.wait(lock);
      continue;
    }
    const auto due = line_.front().due;
    const auto now = mono_now();
    if (due > now) {
      cv_.wait_for(lock, due - now);
      continue;
    }
    auto chunk = std::move(line_.front().bytes);
    line_.pop_front();
    lock.unlock();
    std::size_t sent = 0;
    bool ok = true;
    while (sent < chunk.size()) {
      const auto r = ::send(fd_, chunk.data() + sent, chunk.size() - sent, MSG_NOSIGNAL);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) {
        ok = false;
        break;
      }
      sent += static_cast<std::size_t>(r);
    }
    lock.lock();
    delivered_ += sent;
    if (!ok) failed_ = true;
    cv_.notify_all();
  }
}

}  // namespace nkfg::live
