#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <unordered_set>
#include <vector>

#include "nkfg/units.hpp"

namespace nkfg {

// The single event-ordering authority that pipeline operations schedule
// their delayed effects through. Implemented by a virtual clock in the
// simulator and by a timer thread in the live coordinator.
class Scheduler {
 public:
  virtual ~Scheduler() = default;
  virtual Micros now() const = 0;
  virtual void schedule(Micros delay, std::function<void()> action) = 0;
};

// Zero delays run inline.
inline void after(Scheduler& sched, Micros delay, std::function<void()> action) {
  if (delay.count() == 0) {
    action();
  } else {
    sched.schedule(delay, std::move(action));
  }
}

using EventId = std::uint64_t;

// Discrete-event clock. Events fire in (time, insertion order); time never
// moves backwards.
class VirtualClock final : public Scheduler {
 public:
  Micros now() const override { return now_; }
  void schedule(Micros delay, std::function<void()> action) override {
    schedule_at(now_ + delay, std::move(action));
  }

  EventId schedule_at(Micros when, std::function<void()> action);
  // Cancelling an event that already fired is a no-op.
  void cancel(EventId id) { live_.erase(id); }

  // Dispatches the next live event; false when the queue is empty.
  bool step();
  void run() {
    while (step()) {
    }
  }
  // Dispatches every event with time <= limit, then advances now to limit.
  void run_until(Micros limit);

  std::size_t pending() const { return live_.size(); }
  std::uint64_t dispatched() const { return dispatched_; }

 private:
  struct Entry {
    Micros when;
    EventId id;
    std::function<void()> action;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      return a.when != b.when ? a.when > b.when : a.id > b.id;
    }
  };

  Micros now_{0};
  EventId next_id_ = 0;
  std::uint64_t dispatched_ = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
  std::unordered_set<EventId> live_;
};

}  // namespace nkfg
