#include <gtest/gtest.h>
#include <sys/socket.h>
#include <unistd.h>

#include <random>
#include <thread>

#include "nkfg/error.hpp"
#include "nkfg/live/shaper.hpp"

namespace nkfg::live {
namespace {

ShaperConfig shaper(double rate, double burst = 0.01, double latency = 0.0) {
  ShaperConfig c;
  c.rate_mbps = rate;
  c.burst_mb = burst;
  c.added_latency_ms = latency;
  return c;
}

// Bits granted in every one-second window (t - 1 s, t] ending at a grant.
std::uint64_t worst_window(const std::vector<Grant>& grants) {
  std::uint64_t worst = 0;
  for (std::size_t i = 0; i < grants.size(); ++i) {
    std::uint64_t sum = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      if (grants[j].at > grants[i].at - Micros{1'000'000}) sum += grants[j].bits;
    }
    worst = std::max(worst, sum);
  }
  return worst;
}

TEST(TokenBucket, OneMegabitAtOneMbpsTakesASecond) {
  TokenBucket b(shaper(1.0), Micros{0});
  std::uint64_t sent = 0;
  Micros last{0};
  while (sent < 1'000'000) {
    const auto n = std::min<std::uint64_t>(b.chunk_bits(), 1'000'000 - sent);
    last = b.reserve(n, Micros{0});
    sent += n;
  }
  EXPECT_GE(last, Micros{1'000'000});
  EXPECT_LE(last, Micros{1'000'010});
}

TEST(TokenBucket, FullBucketGrantsAtOnce) {
  TokenBucket b(shaper(1.0, 0.01), Micros{500}, true);
  EXPECT_EQ(b.reserve(10'000, Micros{500}), Micros{500});
  EXPECT_GT(b.reserve(8, Micros{500}), Micros{500});
}

TEST(TokenBucket, GrantsAreMonotone) {
  TokenBucket b(shaper(3.0, 0.05), Micros{0}, true);
  Micros prev{0};
  for (int i = 0; i < 100; ++i) {
    const auto g = b.reserve(4000, Micros{i * 10});
    EXPECT_GE(g, prev);
    EXPECT_GE(g, Micros{i * 10});
    prev = g;
  }
}

TEST(TokenBucket, RandomTrafficNeverExceedsTheRateInAnySecond) {
  std::mt19937_64 rng(8);
  for (int run = 0; run < 30; ++run) {
    const double rate = std::uniform_real_distribution<double>(0.2, 40.0)(rng);
    const double burst = std::uniform_real_distribution<double>(0.001, std::min(rate, 2.0))(rng);
    TokenBucket b(shaper(rate, burst), Micros{0}, run % 2 == 0);
    std::vector<Grant> grants;
    Micros now{0};
    for (int i = 0; i < 400; ++i) {
      now += Micros{static_cast<std::int64_t>(rng() % 50'000)};
      const auto bits = 8 + rng() % b.chunk_bits();
      grants.push_back({b.reserve(bits, now), bits});
    }
    EXPECT_LE(static_cast<double>(worst_window(grants)), rate * 1e6 + 1e-6) << "rate " << rate;
  }
}

TEST(TokenBucket, ReconfigureAppliesTheNewRate) {
  TokenBucket b(shaper(20.0), Micros{0});
  Micros t{0};
  for (int i = 0; i < 50; ++i) t = b.reserve(b.chunk_bits(), t);
  b.reconfigure(shaper(5.0), t);
  std::vector<Grant> after;
  for (int i = 0; i < 200; ++i) {
    const auto g = b.reserve(b.chunk_bits(), t);
    after.push_back({g, b.chunk_bits()});
  }
  EXPECT_LE(worst_window(after), 5'000'000u);
  const double seconds = static_cast<double>((after.back().at - after.front().at).count()) / 1e6;
  EXPECT_NEAR(static_cast<double>(199 * b.chunk_bits()) / seconds, 5e6, 5e6 * 0.01);
}

TEST(ShaperConfig, RejectsNonPositiveRates) {
  EXPECT_THROW(shaper(0.0).validate(), ValidationError);
  EXPECT_THROW(shaper(-3.0).validate(), ValidationError);
  EXPECT_THROW(shaper(1.0, 0.0).validate(), ValidationError);
  EXPECT_THROW(shaper(1.0, 0.01, -1).validate(), ValidationError);
  EXPECT_THROW(TokenBucket(shaper(0.0), Micros{0}), ValidationError);
  TokenBucket b(shaper(1.0), Micros{0});
  EXPECT_THROW(b.reserve(20'000, Micros{0}), ValidationError);
}

class SocketPair : public ::testing::Test {
 protected:
  void SetUp() override { ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds_), 0); }
  void TearDown() override {
    ::close(fds_[0]);
    ::close(fds_[1]);
  }

  // Reads `n` bytes and returns the monotonic time the last one arrived.
  Micros receive(std::size_t n) {
    std::vector<std::uint8_t> buf(64 * 1024);
    std::size_t got = 0;
    while (got < n) {
      const auto r = ::read(fds_[1], buf.data(), std::min(buf.size(), n - got));
      if (r <= 0) break;
      got += static_cast<std::size_t>(r);
    }
    EXPECT_EQ(got, n);
    return mono_now();
  }

  int fds_[2];
};

TEST_F(SocketPair, OneMegabitAtOneMbpsOverASocket) {
  ShapedSender sender(fds_[0], shaper(1.0));
  const std::vector<std::uint8_t> payload(125'000, 0x5a);
  Micros done{0};
  std::thread reader([&] { done = receive(payload.size()); });
  const auto start = mono_now();
  ASSERT_TRUE(sender.send(payload));
  sender.flush();
  reader.join();
  const double ms = to_ms(done - start);
  EXPECT_GE(ms, 999.0);
  EXPECT_LE(ms, 1100.0);
  EXPECT_EQ(sender.delivered_bytes(), payload.size());
  EXPECT_LE(worst_window(sender.grants()), 1'000'000u);
}

TEST_F(SocketPair, AddedLatencyDelaysDelivery) {
  ShapedSender sender(fds_[0], shaper(1000.0, 1.0, 20.0), true);
  const std::vector<std::uint8_t> payload(1000, 1);
  Micros done{0};
  std::thread reader([&] { done = receive(payload.size()); });
  const auto start = mono_now();
  ASSERT_TRUE(sender.send(payload));
  reader.join();
  const double ms = to_ms(done - start);
  EXPECT_GE(ms, 20.0);
  EXPECT_LE(ms, 35.0);
}

TEST_F(SocketPair, FullBucketWithoutLatencyIsImmediate) {
  ShapedSender sender(fds_[0], shaper(1.0, 0.1), true);
  const std::vector<std::uint8_t> payload(1000, 1);
  Micros done{0};
  std::thread reader([&] { done = receive(payload.size()); });
  const auto start = mono_now();
  ASSERT_TRUE(sender.send(payload));
  reader.join();
  EXPECT_LE(to_ms(done - start), 15.0);
}

TEST_F(SocketPair, ClosedPeerFailsTheSender) {
  ShapedSender sender(fds_[0], shaper(100.0), true);
  ::shutdown(fds_[1], SHUT_RDWR);
  ::close(fds_[1]);
  fds_[1] = ::dup(fds_[0]);
  const std::vector<std::uint8_t> payload(10'000, 1);
  bool ok = true;
  for (int i = 0; i < 50 && ok; ++i) {
    ok = sender.send(payload);
    sender.flush();
  }
  EXPECT_FALSE(ok);
}

}  // namespace
}  // namespace nkfg::live
