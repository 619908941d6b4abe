#include "nkfg/strategies.hpp"

#include <memory>

#include "nkfg/error.hpp"

namespace nkfg {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::pause_resume: return "pause_resume";
    case Strategy::dyn_A_case1: return "dyn_A_case1";
    case Strategy::dyn_A_case2: return "dyn_A_case2";
    case Strategy::dyn_B_case1: return "dyn_B_case1";
    case Strategy::dyn_B_case2: return "dyn_B_case2";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  for (auto s : all_strategies()) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("strategy: unknown value \"" + text +
                    "\" (expected pause_resume, dyn_A_case1, dyn_A_case2, dyn_B_case1 or "
                    "dyn_B_case2)");
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all{Strategy::pause_resume, Strategy::dyn_A_case1,
                                         Strategy::dyn_A_case2, Strategy::dyn_B_case1,
                                         Strategy::dyn_B_case2};
  return all;
}

std::string to_string(DowntimeKind k) {
  return k == DowntimeKind::full_outage ? "full_outage" : "degraded";
}

Deployment make_deployment(Strategy strategy, const PartitionPlan& initial,
                           DeploymentOptions options) {
  Deployment d(initial, std::move(options));
  if (strategy == Strategy::dyn_A_case1) d.bootstrap_standby(initial, Placement::new_containers);
  if (strategy == Strategy::dyn_A_case2) d.bootstrap_standby(initial, Placement::existing_containers);
  return d;
}

Micros expected_downtime(Strategy strategy, const TimingParams& t, bool cached) {
  switch (strategy) {
    case Strategy::pause_resume: return t.t_update;
    case Strategy::dyn_A_case1:
    case Strategy::dyn_A_case2: return t.t_standby_update + t.t_switch;
    case Strategy::dyn_B_case1: return (cached ? Micros{0} : t.t_build) + t.t_initialisation + t.t_switch;
    case Strategy::dyn_B_case2: return t.t_exec + t.t_switch;
  }
  return Micros{0};
}

void begin_transition(Deployment& d, Scheduler& sched, Strategy strategy,
                      const PartitionPlan& new_plan, const TimingParams& timing,
                      std::function<void(TransitionReport)> done) {
  validate(timing);
  if (d.active_count() != 1) throw StateError("transition requires exactly one active pipeline");

  auto report = std::make_shared<TransitionReport>();
  report->strategy = strategy;
  report->window.start = sched.now();
  report->old_split = d.active().plan.split;
  report->new_split = new_plan.split;
  report->from = d.dispatcher_target();
  report->to = report->from;
  d.reset_peak_memory();

  auto finish = [&d, &sched, report, done = std::move(done)] {
    report->window.end = sched.now();
    report->t_downtime = report->window.length();
    report->to = d.dispatcher_target();
    report->memory = d.peak_memory();
    if (done) done(*report);
  };

  switch (strategy) {
    case Strategy::pause_resume: {
      report->downtime_kind = DowntimeKind::full_outage;
      const auto id = d.dispatcher_target();
      d.pause(id);
      d.update_metadata(sched, id, new_plan, timing.t_update,
                        [&d, id, finish = std::move(finish)] {
                          d.resume(id);
                          finish();
                        });
      return;
    }
    case Strategy::dyn_A_case1:
    case Strategy::dyn_A_case2: {
      report->downtime_kind = DowntimeKind::degraded;
      const auto standby = d.standby();
      if (!d.has_persistent_standby() || !standby) {
        throw StateError("dynamic switching (scenario A): no redundant pipeline available");
      }
      const auto& sp = d.pipeline(*standby);
      const bool separate = sp.edge != d.active().edge;
      if (separate != (strategy == Strategy::dyn_A_case1)) {
        throw StateError("dynamic switching (scenario A): standby placement does not match " +
                         to_string(strategy));
      }
      const auto to = *standby;
      d.update_standby(sched, to, new_plan, timing.t_standby_update,
                       [&d, &sched, to, t = timing.t_switch, finish = std::move(finish)]() mutable {
                         d.switch_dispatcher(sched, to, t, DrainAction::standby, std::move(finish));
                       });
      return;
    }
    case Strategy::dyn_B_case1:
    case Strategy::dyn_B_case2: {
      report->downtime_kind = DowntimeKind::degraded;
      if (d.live_pipeline_count() != 1) {
        throw StateError("dynamic switching (scenario B): requires a single live pipeline");
      }
      const auto placement = strategy == Strategy::dyn_B_case1 ? Placement::new_containers
                                                               : Placement::existing_containers;
      d.spawn_pipeline(sched, new_plan, placement, timing,
                       [&d, &sched, t = timing.t_switch, finish = std::move(finish)](PipelineId id) mutable {
                         d.switch_dispatcher(sched, id, t, DrainAction::retire, std::move(finish));
                       });
      return;
    }
  }
}

namespace {

TransitionReport run_sync(Deployment& d, Strategy s, const PartitionPlan& plan,
                          const TimingParams& timing) {
  VirtualClock clock;
  std::optional<TransitionReport> out;
  begin_transition(d, clock, s, plan, timing, [&](TransitionReport r) { out = r; });
  clock.run();
  if (!out) throw StateError(to_string(s) + ": transition did not complete");
  return *out;
}

}  // namespace

TransitionReport pause_and_resume(Deployment& d, const PartitionPlan& plan,
                                  const TimingParams& timing) {
  return run_sync(d, Strategy::pause_resume, plan, timing);
}

TransitionReport dynamic_switch_A(Deployment& d, const PartitionPlan& plan, int scenario_case,
                                  const TimingParams& timing) {
  if (scenario_case != 1 && scenario_case != 2) throw ValidationError("case must be 1 or 2");
  return run_sync(d, scenario_case == 1 ? Strategy::dyn_A_case1 : Strategy::dyn_A_case2, plan,
                  timing);
}

TransitionReport dynamic_switch_B_case1(Deployment& d, const PartitionPlan& plan,
                                        const TimingParams& timing) {
  return run_sync(d, Strategy::dyn_B_case1, plan, timing);
}

TransitionReport dynamic_switch_B_case2(Deployment& d, const PartitionPlan& plan,
                                        const TimingParams& timing) {
  return run_sync(d, Strategy::dyn_B_case2, plan, timing);
}

}  // namespace nkfg
