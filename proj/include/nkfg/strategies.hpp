#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "nkfg/clock.hpp"
#include "nkfg/pipeline.hpp"
#include "nkfg/planner.hpp"
#include "nkfg/timing.hpp"

namespace nkfg {

enum class Strategy { pause_resume, dyn_A_case1, dyn_A_case2, dyn_B_case1, dyn_B_case2 };

std::string to_string(Strategy s);
// Throws ConfigError naming the unknown value.
Strategy parse_strategy(const std::string& text);
const std::vector<Strategy>& all_strategies();

enum class DowntimeKind { full_outage, degraded };
std::string to_string(DowntimeKind k);

struct TransitionWindow {
  Micros start{0};
  Micros end{0};
  Micros length() const { return end - start; }
};

struct TransitionReport {
  Strategy strategy = Strategy::pause_resume;
  Micros t_downtime{0};
  DowntimeKind downtime_kind = DowntimeKind::full_outage;
  TransitionWindow window;
  std::uint64_t frames_dropped = 0;
  std::uint64_t frames_degraded = 0;  // completed inside the window at the stale split
  MemoryFootprint memory;             // peak over the transition
  std::size_t old_split = 0;
  std::size_t new_split = 0;
  PipelineId from = 0;
  PipelineId to = 0;
};

// Deployment shaped for a strategy: Scenario A starts with an always-on
// standby in new (case 1) or shared (case 2) containers.
Deployment make_deployment(Strategy strategy, const PartitionPlan& initial,
                           DeploymentOptions options = {});

// Runs the strategy's protocol through `sched`. `done` fires once the
// dispatcher targets a pipeline running `new_plan`; frame counts in the
// report are left at zero for the caller to fill from its event stream.
void begin_transition(Deployment& deployment, Scheduler& sched, Strategy strategy,
                      const PartitionPlan& new_plan, const TimingParams& timing,
                      std::function<void(TransitionReport)> done);

// Synchronous forms on a private virtual clock with no frame traffic.
TransitionReport pause_and_resume(Deployment& deployment, const PartitionPlan& new_plan,
                                  const TimingParams& timing);
TransitionReport dynamic_switch_A(Deployment& deployment, const PartitionPlan& new_plan,
                                  int scenario_case, const TimingParams& timing);
TransitionReport dynamic_switch_B_case1(Deployment& deployment, const PartitionPlan& new_plan,
                                        const TimingParams& timing);
TransitionReport dynamic_switch_B_case2(Deployment& deployment, const PartitionPlan& new_plan,
                                        const TimingParams& timing);

// Closed-form downtime for a strategy under the given timings.
Micros expected_downtime(Strategy strategy, const TimingParams& timing, bool base_image_cached = true);

}  // namespace nkfg
