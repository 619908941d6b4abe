#include "nkfg/pipeline.hpp"

#include <algorithm>

#include "nkfg/error.hpp"

namespace nkfg {

std::string to_string(ContainerState s) {
  switch (s) {
    case ContainerState::absent: return "absent";
    case ContainerState::building: return "building";
    case ContainerState::initialising: return "initialising";
    case ContainerState::running: return "running";
    case ContainerState::paused: return "paused";
    case ContainerState::terminated: return "terminated";
  }
  return "?";
}

std::string to_string(PipelineRole r) {
  switch (r) {
    case PipelineRole::active: return "active";
    case PipelineRole::redundant: return "redundant";
    case PipelineRole::draining: return "draining";
    case PipelineRole::dead: return "dead";
  }
  return "?";
}

std::string to_string(Placement p) {
  return p == Placement::new_containers ? "new_containers" : "existing_containers";
}

std::string to_string(DeploymentEvent::Kind k) {
  using K = DeploymentEvent::Kind;
  switch (k) {
    case K::container_state: return "container_state";
    case K::pipeline_spawned: return "pipeline_spawned";
    case K::pipeline_ready: return "pipeline_ready";
    case K::paused: return "paused";
    case K::resumed: return "resumed";
    case K::plan_updated: return "plan_updated";
    case K::dispatcher_switched: return "dispatcher_switched";
    case K::pipeline_standby: return "pipeline_standby";
    case K::pipeline_retired: return "pipeline_retired";
  }
  return "?";
}

bool legal_transition(ContainerState from, ContainerState to, bool base_image_cached) {
  using S = ContainerState;
  switch (from) {
    case S::absent: return to == S::building || (to == S::initialising && base_image_cached);
    case S::building: return to == S::initialising;
    case S::initialising: return to == S::running;
    case S::running: return to == S::paused || to == S::terminated;
    case S::paused: return to == S::running;
    case S::terminated: return false;
  }
  return false;
}

void Container::transition(ContainerState to) {
  if (!legal_transition(state_, to, cached_)) {
    throw StateError("container " + std::to_string(id_) + ": illegal transition " +
                     to_string(state_) + " -> " + to_string(to));
  }
  state_ = to;
}

void Frame::advance(FrameStatus to) {
  const bool ok = (status == FrameStatus::queued &&
                   (to == FrameStatus::in_flight || to == FrameStatus::dropped)) ||
                  (status == FrameStatus::in_flight && to == FrameStatus::completed);
  if (!ok) throw StateError("frame " + std::to_string(seq) + ": illegal status transition");
  status = to;
}

FrameQueue::FrameQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ValidationError("queue capacity must be >= 1");
}

std::optional<Frame> FrameQueue::push(Frame frame) {
  std::optional<Frame> evicted;
  if (frames_.size() == capacity_) {
    evicted = std::move(frames_.front());
    frames_.pop_front();
    evicted->advance(FrameStatus::dropped);
  }
  frames_.push_back(std::move(frame));
  return evicted;
}

std::optional<Frame> FrameQueue::pop() {
  if (frames_.empty()) return std::nullopt;
  Frame f = std::move(frames_.front());
  frames_.pop_front();
  f.advance(FrameStatus::in_flight);
  return f;
}

Deployment::Deployment(const PartitionPlan& initial, DeploymentOptions options)
    : options_(std::move(options)) {
  if (options_.queue_capacity == 0) throw ValidationError("queue capacity must be >= 1");
  const auto edge = add_container();
  const auto cloud = add_container();
  for (auto c : {edge, cloud}) {
    if (!options_.base_image_cached) move_container(c, ContainerState::building);
    move_container(c, ContainerState::initialising);
    move_container(c, ContainerState::running);
  }
  target_ = add_pipeline(initial, edge, cloud);
  auto& p = mut(target_);
  p.role = PipelineRole::active;
  p.started = true;
  peak_ = memory_footprint();
}

ContainerId Deployment::add_container() {
  containers_.emplace_back(containers_.size(), options_.base_image_cached);
  return containers_.back().id();
}

void Deployment::move_container(ContainerId id, ContainerState to) {
  auto& c = containers_.at(id);
  const auto from = c.state();
  c.transition(to);
  track_peak();
  emit({DeploymentEvent::Kind::container_state, 0, 0, id, from, to});
}

PipelineId Deployment::add_pipeline(const PartitionPlan& plan, ContainerId edge, ContainerId cloud) {
  Pipeline p;
  p.id = pipelines_.size();
  p.plan = plan;
  p.edge = edge;
  p.cloud = cloud;
  p.queue = FrameQueue(options_.queue_capacity);
  pipelines_.push_back(std::move(p));
  return pipelines_.back().id;
}

void Deployment::emit(DeploymentEvent e) {
  if (observer_) observer_(e);
}

std::int64_t Deployment::footprint_tenths() const {
  const auto pair = DeciMB::from_mb(options_.memory.container_mb).tenths;
  const auto extra = DeciMB::from_mb(options_.memory.in_container_pipeline_mb).tenths;
  std::int64_t total = 0;
  for (const auto& c : containers_) {
    if (!c.live()) continue;
    const auto users = std::count_if(pipelines_.begin(), pipelines_.end(), [&](const Pipeline& p) {
      return p.role != PipelineRole::dead && p.edge == c.id();
    });
    const bool is_edge = std::any_of(pipelines_.begin(), pipelines_.end(),
                                     [&](const Pipeline& p) { return p.edge == c.id(); });
    if (!is_edge) continue;  // a pair is charged once, on its edge side
    total += pair + std::max<std::int64_t>(0, users - 1) * extra;
  }
  return total;
}

MemoryFootprint Deployment::memory_footprint() const {
  const auto initial = DeciMB::from_mb(options_.memory.container_mb);
  const DeciMB total{footprint_tenths()};
  const DeciMB additional{std::max<std::int64_t>(0, total.tenths - initial.tenths)};
  return {initial.mb(), additional.mb(), total.mb(),
          additional.tenths > 0 && !persistent_standby_};
}

void Deployment::track_peak() {
  const auto now = memory_footprint();
  if (now.total_mb > peak_.total_mb) peak_ = now;
}

bool Deployment::containers_running(const Pipeline& p) const {
  return containers_.at(p.edge).state() == ContainerState::running &&
         containers_.at(p.cloud).state() == ContainerState::running;
}

bool Deployment::shares_containers(const Pipeline& p) const {
  return std::any_of(pipelines_.begin(), pipelines_.end(), [&](const Pipeline& q) {
    return q.id != p.id && q.role != PipelineRole::dead && q.edge == p.edge;
  });
}

std::size_t Deployment::active_count() const {
  return std::count_if(pipelines_.begin(), pipelines_.end(),
                       [](const Pipeline& p) { return p.role == PipelineRole::active; });
}

std::size_t Deployment::live_pipeline_count() const {
  return std::count_if(pipelines_.begin(), pipelines_.end(),
                       [](const Pipeline& p) { return p.role != PipelineRole::dead; });
}

std::optional<PipelineId> Deployment::standby() const {
  for (const auto& p : pipelines_) {
    if (p.role == PipelineRole::redundant && p.started) return p.id;
  }
  return std::nullopt;
}

std::uint64_t Deployment::in_system() const {
  std::uint64_t n = 0;
  for (const auto& p : pipelines_) n += p.queue.size() + (p.in_flight ? 1 : 0);
  return n;
}

PipelineId Deployment::bootstrap_standby(const PartitionPlan& plan, Placement placement) {
  if (live_pipeline_count() >= 2) throw StateError("deployment already hosts two pipelines");
  const auto& base = active();
  ContainerId edge = base.edge, cloud = base.cloud;
  if (placement == Placement::new_containers) {
    edge = add_container();
    cloud = add_container();
    for (auto c : {edge, cloud}) {
      if (!options_.base_image_cached) move_container(c, ContainerState::building);
      move_container(c, ContainerState::initialising);
      move_container(c, ContainerState::running);
    }
  }
  const auto id = add_pipeline(plan, edge, cloud);
  mut(id).started = true;
  persistent_standby_ = true;
  peak_ = memory_footprint();
  emit({DeploymentEvent::Kind::pipeline_spawned, id});
  emit({DeploymentEvent::Kind::pipeline_ready, id});
  return id;
}

PipelineId Deployment::spawn_pipeline(Scheduler& sched, const PartitionPlan& plan,
                                      Placement placement, const TimingParams& timing,
                                      std::function<void(PipelineId)> on_ready) {
  validate(timing);
  if (live_pipeline_count() >= 2) throw StateError("deployment already hosts two pipelines");
  const auto pair = DeciMB::from_mb(options_.memory.container_mb).tenths;
  const auto extra = DeciMB::from_mb(options_.memory.in_container_pipeline_mb).tenths;
  auto check_budget = [&](std::int64_t added) {
    if (!options_.memory.budget_mb) return;
    const auto budget = DeciMB::from_mb(*options_.memory.budget_mb).tenths;
    if (footprint_tenths() + added > budget) {
      throw MemoryBudgetError("memory budget exceeded: " +
                              DeciMB{footprint_tenths() + added}.str() + " MB needed, " +
                              DeciMB{budget}.str() + " MB available");
    }
  };

  if (placement == Placement::existing_containers) {
    const auto& base = active();
    const auto es = containers_.at(base.edge).state();
    const auto cs = containers_.at(base.cloud).state();
    auto usable = [](ContainerState s) {
      return s == ContainerState::running || s == ContainerState::paused;
    };
    if (!usable(es) || !usable(cs)) {
      throw StateError("existing_containers requested but no live container is running or paused");
    }
    check_budget(extra);
    const auto id = add_pipeline(plan, base.edge, base.cloud);
    track_peak();
    emit({DeploymentEvent::Kind::pipeline_spawned, id});
    after(sched, timing.t_exec, [this, id, on_ready = std::move(on_ready)] {
      mut(id).started = true;
      emit({DeploymentEvent::Kind::pipeline_ready, id});
      if (on_ready) on_ready(id);
    });
    return id;
  }

  check_budget(pair);
  const auto edge = add_container();
  const auto cloud = add_container();
  const auto id = add_pipeline(plan, edge, cloud);
  emit({DeploymentEvent::Kind::pipeline_spawned, id});
  auto finish = [this, id, edge, cloud, on_ready = std::move(on_ready)] {
    move_container(edge, ContainerState::running);
    move_container(cloud, ContainerState::running);
    mut(id).started = true;
    emit({DeploymentEvent::Kind::pipeline_ready, id});
    if (on_ready) on_ready(id);
  };
  auto initialise = [this, &sched, edge, cloud, t = timing.t_initialisation,
                     finish = std::move(finish)]() mutable {
    move_container(edge, ContainerState::initialising);
    move_container(cloud, ContainerState::initialising);
    after(sched, t, std::move(finish));
  };
  if (options_.base_image_cached) {
    initialise();
  } else {
    move_container(edge, ContainerState::building);
    move_container(cloud, ContainerState::building);
    after(sched, timing.t_build, std::move(initialise));
  }
  return id;
}

void Deployment::pause(PipelineId id) {
  auto& p = mut(id);
  if (p.role == PipelineRole::dead) throw StateError("pause: pipeline is dead");
  if (!containers_running(p)) {
    throw StateError("pause: pipeline " + std::to_string(id) + " is not running");
  }
  move_container(p.edge, ContainerState::paused);
  move_container(p.cloud, ContainerState::paused);
  emit({DeploymentEvent::Kind::paused, id});
}

void Deployment::resume(PipelineId id) {
  auto& p = mut(id);
  if (containers_.at(p.edge).state() != ContainerState::paused ||
      containers_.at(p.cloud).state() != ContainerState::paused) {
    throw StateError("resume: pipeline " + std::to_string(id) + " is not paused");
  }
  move_container(p.edge, ContainerState::running);
  move_container(p.cloud, ContainerState::running);
  emit({DeploymentEvent::Kind::resumed, id});
}

void Deployment::update_metadata(Scheduler& sched, PipelineId id, const PartitionPlan& plan,
                                 Micros t_update, std::function<void()> done) {
  const auto& p = pipeline(id);
  if (containers_.at(p.edge).state() != ContainerState::paused) {
    throw StateError("update_metadata: pipeline " + std::to_string(id) + " is not paused");
  }
  if (t_update.count() < 0) throw ValidationError("t_update must be >= 0");
  after(sched, t_update, [this, id, plan, done = std::move(done)] {
    mut(id).plan = plan;
    emit({DeploymentEvent::Kind::plan_updated, id});
    if (done) done();
  });
}

void Deployment::update_standby(Scheduler& sched, PipelineId id, const PartitionPlan& plan,
                                Micros duration, std::function<void()> done) {
  const auto& p = pipeline(id);
  if (p.role != PipelineRole::redundant || !p.started) {
    throw StateError("update_standby: pipeline " + std::to_string(id) + " is not a ready standby");
  }
  after(sched, duration, [this, id, plan, done = std::move(done)] {
    mut(id).plan = plan;
    emit({DeploymentEvent::Kind::plan_updated, id});
    if (done) done();
  });
}

void Deployment::switch_dispatcher(Scheduler& sched, PipelineId to, Micros t_switch,
                                   DrainAction drain, std::function<void()> done) {
  auto check = [this, to] {
    const auto& p = pipeline(to);
    if (to == target_) throw StateError("switch: pipeline is already the dispatcher target");
    if (p.role != PipelineRole::redundant || !p.started || !containers_running(p)) {
      throw StateError("switch: target pipeline " + std::to_string(to) + " is not running");
    }
  };
  check();
  if (switching_) throw StateError("switch: another switch is in progress");
  switching_ = true;
  after(sched, t_switch, [this, to, drain, check, done = std::move(done)] {
    check();
    const auto from = target_;
    auto& old = mut(from);
    old.role = PipelineRole::draining;
    old.after_drain = drain;
    mut(to).role = PipelineRole::active;
    target_ = to;
    switching_ = false;
    emit({DeploymentEvent::Kind::dispatcher_switched, to, from});
    maybe_finish_drain(from);
    if (done) done();
  });
}

AdmitResult Deployment::admit(Frame frame) {
  ++admitted_;
  frame.status = FrameStatus::queued;
  auto& p = mut(target_);
  AdmitResult r{target_, p.queue.push(std::move(frame))};
  if (r.dropped) ++dropped_;
  return r;
}

bool Deployment::can_process(PipelineId id) const {
  const auto& p = pipeline(id);
  return p.started && containers_running(p) &&
         (p.role == PipelineRole::active || p.role == PipelineRole::draining);
}

std::optional<Frame> Deployment::start_next(PipelineId id) {
  if (!can_process(id)) return std::nullopt;
  auto& p = mut(id);
  if (p.in_flight || p.queue.empty()) return std::nullopt;
  p.in_flight = p.queue.pop();
  ++started_;
  return p.in_flight;
}

Frame Deployment::complete(PipelineId id) {
  auto& p = mut(id);
  if (!p.in_flight) throw StateError("complete: pipeline " + std::to_string(id) + " is idle");
  Frame f = std::move(*p.in_flight);
  p.in_flight.reset();
  f.advance(FrameStatus::completed);
  ++completed_;
  maybe_finish_drain(id);
  return f;
}

void Deployment::maybe_finish_drain(PipelineId id) {
  auto& p = mut(id);
  if (p.role != PipelineRole::draining || p.in_flight || !p.queue.empty()) return;
  const auto action = p.after_drain.value_or(DrainAction::retire);
  p.after_drain.reset();
  if (action == DrainAction::standby) {
    p.role = PipelineRole::redundant;
    emit({DeploymentEvent::Kind::pipeline_standby, id});
  } else {
    retire(id);
  }
}

void Deployment::retire(PipelineId id) {
  auto& p = mut(id);
  p.role = PipelineRole::dead;
  const bool shared = shares_containers(p);
  const auto edge = p.edge;
  const auto cloud = p.cloud;
  if (!shared) {
    move_container(edge, ContainerState::terminated);
    move_container(cloud, ContainerState::terminated);
  }
  emit({DeploymentEvent::Kind::pipeline_retired, id});
}

}  // namespace nkfg
