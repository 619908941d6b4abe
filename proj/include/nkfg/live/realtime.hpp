#pragma once

#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "nkfg/clock.hpp"

namespace nkfg::live {

// Wall-clock Scheduler: a timer thread runs actions in (due time,
// submission) order. Actions run one at a time on that thread, so state
// touched only from actions needs no further locking.
class RealtimeScheduler final : public Scheduler {
 public:
  RealtimeScheduler();
  ~RealtimeScheduler() override;
  RealtimeScheduler(const RealtimeScheduler&) = delete;
  RealtimeScheduler& operator=(const RealtimeScheduler&) = delete;

  Micros now() const override;
  void schedule(Micros delay, std::function<void()> action) override;

  // Runs `action` on the timer thread and waits for it to return.
  void run_sync(const std::function<void()>& action);
  void stop();

 private:
  void loop();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<Micros, std::uint64_t>, std::function<void()>> queue_;
  std::uint64_t next_id_ = 0;
  bool stop_ = false;
  std::thread thread_;
};

}  // namespace nkfg::live
