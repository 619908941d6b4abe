#include "nkfg/live/realtime.hpp"

#include <exception>
#include <future>

#include "nkfg/live/shaper.hpp"

namespace nkfg::live {

RealtimeScheduler::RealtimeScheduler() : thread_([this] { loop(); }) {}

RealtimeScheduler::~RealtimeScheduler() { stop(); }

Micros RealtimeScheduler::now() const { return mono_now(); }

void RealtimeScheduler::schedule(Micros delay, std::function<void()> action) {
  {
    std::lock_guard lock(mu_);
    queue_.emplace(std::make_pair(mono_now() + delay, next_id_++), std::move(action));
  }
  cv_.notify_all();
}

void RealtimeScheduler::run_sync(const std::function<void()>& action) {
  std::promise<void> done;
  auto result = done.get_future();
  schedule(Micros{0}, [&] {
    try {
      action();
      done.set_value();
    } catch (...) {
      done.set_exception(std::current_exception());
    }
  });
  result.get();
}

void RealtimeScheduler::stop() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
}

void RealtimeScheduler::loop() {
  std::unique_lock lock(mu_);
  while (!stop_) {
    if (queue_.empty()) {
      cv_.wait(lock);
      continue;
    }
    const auto due = queue_.begin()->first.first;
    const auto now = mono_now();
    if (due > now) {
      cv_.wait_for(lock, due - now);
      continue;
    }
    auto action = std::move(queue_.begin()->second);
    queue_.erase(queue_.begin());
    lock.unlock();
    action();
    lock.lock();
  }
}

}  // namespace nkfg::live
