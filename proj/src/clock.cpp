#include "nkfg/clock.hpp"

#include "nkfg/error.hpp"

namespace nkfg {

EventId VirtualClock::schedule_at(Micros when, std::function<void()> action) {
  if (when < now_) throw StateError("cannot schedule an event in the past");
  const auto id = next_id_++;
  queue_.push({when, id, std::move(action)});
  live_.insert(id);
  return id;
}

bool VirtualClock::step() {
  while (!queue_.empty()) {
    Entry e = queue_.top();
    queue_.pop();
    if (live_.erase(e.id) == 0) continue;
    now_ = e.when;
    ++dispatched_;
    e.action();
    return true;
  }
  return false;
}

void VirtualClock::run_until(Micros limit) {
  while (!queue_.empty()) {
    const auto& top = queue_.top();
    if (!live_.count(top.id)) {
      queue_.pop();
      continue;
    }
    if (top.when > limit) break;
    step();
  }
  if (now_ < limit) now_ = limit;
}

}  // namespace nkfg
