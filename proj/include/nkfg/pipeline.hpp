#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nkfg/clock.hpp"
#include "nkfg/planner.hpp"
#include "nkfg/timing.hpp"
#include "nkfg/units.hpp"

namespace nkfg {

using ContainerId = std::size_t;
using PipelineId = std::size_t;

enum class ContainerState { absent, building, initialising, running, paused, terminated };
std::string to_string(ContainerState s);

// absent->building->initialising->running, running<->paused,
// running->terminated, and absent->initialising for a cached base image.
bool legal_transition(ContainerState from, ContainerState to, bool base_image_cached);

class Container {
 public:
  Container(ContainerId id, bool base_image_cached) : id_(id), cached_(base_image_cached) {}

  ContainerId id() const { return id_; }
  ContainerState state() const { return state_; }
  bool base_image_cached() const { return cached_; }
  bool live() const { return state_ != ContainerState::absent && state_ != ContainerState::terminated; }

  // Throws StateError on an illegal transition; the state is left unchanged.
  void transition(ContainerState to);

 private:
  ContainerId id_;
  bool cached_;
  ContainerState state_ = ContainerState::absent;
};

enum class FrameStatus { queued, in_flight, completed, dropped };

struct Frame {
  std::uint64_t seq = 0;
  Micros arrival{0};
  double payload_mb = 0.0;
  FrameStatus status = FrameStatus::queued;

  // queued->in_flight->completed or queued->dropped.
  void advance(FrameStatus to);
};

// Bounded ingress buffer. When full, the oldest waiting frame is dropped.
class FrameQueue {
 public:
  explicit FrameQueue(std::size_t capacity);

  // Returns the frame evicted to make room, if any.
  std::optional<Frame> push(Frame frame);
  std::optional<Frame> pop();

  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<Frame> frames_;
};

enum class PipelineRole { active, redundant, draining, dead };
std::string to_string(PipelineRole r);

enum class Placement { new_containers, existing_containers };
std::string to_string(Placement p);

// What happens to the previous active pipeline once its backlog is empty.
enum class DrainAction { retire, standby };

struct Pipeline {
  PipelineId id = 0;
  PartitionPlan plan;
  ContainerId edge = 0;
  ContainerId cloud = 0;
  PipelineRole role = PipelineRole::redundant;
  FrameQueue queue{1};
  bool started = false;  // process inside the containers is up
  std::optional<Frame> in_flight;
  std::optional<DrainAction> after_drain;
};

struct MemoryModel {
  double container_mb = 763.1;           // one edge-cloud container pair
  double in_container_pipeline_mb = 0.0; // each extra pipeline sharing a pair
  std::optional<double> budget_mb;       // admission limit for new containers
};

struct MemoryFootprint {
  double initial_mb = 0.0;
  double additional_mb = 0.0;
  double total_mb = 0.0;
  bool transient = false;  // the additional share exists only while switching

  friend bool operator==(const MemoryFootprint&, const MemoryFootprint&) = default;
};

struct DeploymentOptions {
  std::size_t queue_capacity = 1;
  bool base_image_cached = true;
  MemoryModel memory;
};

struct DeploymentEvent {
  enum class Kind {
    container_state,
    pipeline_spawned,
    pipeline_ready,
    paused,
    resumed,
    plan_updated,
    dispatcher_switched,
    pipeline_standby,
    pipeline_retired,
  };
  Kind kind;
  PipelineId pipeline = 0;     // subject pipeline (switch: new target)
  PipelineId previous = 0;     // switch: old target
  ContainerId container = 0;   // container_state only
  ContainerState from = ContainerState::absent;
  ContainerState to = ContainerState::absent;
};
std::string to_string(DeploymentEvent::Kind k);

struct AdmitResult {
  PipelineId pipeline = 0;
  std::optional<Frame> dropped;
};

// One edge-cloud deployment with its container pairs and the pipelines
// they host. All mutation goes through one Scheduler; the type is not
// internally synchronised.
class Deployment {
 public:
  using Observer = std::function<void(const DeploymentEvent&)>;

  // Starts with one active pipeline whose containers are already running.
  Deployment(const PartitionPlan& initial, DeploymentOptions options = {});

  void set_observer(Observer observer) { observer_ = std::move(observer); }

  // Adds an always-on standby pipeline at deployment start, running
  // immediately. Marks the deployment as holding persistent spare memory.
  PipelineId bootstrap_standby(const PartitionPlan& plan, Placement placement);

  // Brings up a redundant pipeline. New containers pass through building
  // (skipped with a cached base image) and initialising; shared containers
  // only pay t_exec. `on_ready` fires once the pipeline can take traffic.
  PipelineId spawn_pipeline(Scheduler& sched, const PartitionPlan& plan, Placement placement,
                            const TimingParams& timing, std::function<void(PipelineId)> on_ready);

  void pause(PipelineId id);
  void resume(PipelineId id);

  // Requires a paused pipeline; the plan is replaced t_update later.
  void update_metadata(Scheduler& sched, PipelineId id, const PartitionPlan& plan, Micros t_update,
                       std::function<void()> done);

  // Replaces the plan of an idle redundant pipeline.
  void update_standby(Scheduler& sched, PipelineId id, const PartitionPlan& plan, Micros duration,
                      std::function<void()> done);

  // After t_switch the dispatcher targets `to`; the previous active pipeline
  // drains its backlog and then `drain` is applied to it.
  void switch_dispatcher(Scheduler& sched, PipelineId to, Micros t_switch, DrainAction drain,
                         std::function<void()> done);

  // Dispatches a frame to the current target's queue.
  AdmitResult admit(Frame frame);
  bool can_process(PipelineId id) const;
  // Moves the head of the queue in flight when the pipeline is idle and able.
  std::optional<Frame> start_next(PipelineId id);
  // Completes the in-flight frame; a drained pipeline is then retired or
  // returned to standby as requested at switch time.
  Frame complete(PipelineId id);

  MemoryFootprint memory_footprint() const;
  void reset_peak_memory() { peak_ = memory_footprint(); }
  const MemoryFootprint& peak_memory() const { return peak_; }

  PipelineId dispatcher_target() const { return target_; }
  const Pipeline& active() const { return pipelines_.at(target_); }
  const Pipeline& pipeline(PipelineId id) const { return pipelines_.at(id); }
  const std::vector<Pipeline>& pipelines() const { return pipelines_; }
  const Container& container(ContainerId id) const { return containers_.at(id); }
  const std::vector<Container>& containers() const { return containers_; }
  std::size_t active_count() const;
  std::size_t live_pipeline_count() const;
  std::optional<PipelineId> standby() const;
  bool has_persistent_standby() const { return persistent_standby_; }
  const DeploymentOptions& options() const { return options_; }

  std::uint64_t admitted() const { return admitted_; }
  std::uint64_t started() const { return started_; }
  std::uint64_t completed() const { return completed_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t in_system() const;

 private:
  Pipeline& mut(PipelineId id) { return pipelines_.at(id); }
  ContainerId add_container();
  void move_container(ContainerId id, ContainerState to);
  PipelineId add_pipeline(const PartitionPlan& plan, ContainerId edge, ContainerId cloud);
  bool containers_running(const Pipeline& p) const;
  bool shares_containers(const Pipeline& p) const;
  void maybe_finish_drain(PipelineId id);
  void retire(PipelineId id);
  void emit(DeploymentEvent e);
  void track_peak();
  std::int64_t footprint_tenths() const;

  DeploymentOptions options_;
  std::vector<Container> containers_;
  std::vector<Pipeline> pipelines_;
  PipelineId target_ = 0;
  bool persistent_standby_ = false;
  bool switching_ = false;
  Observer observer_;
  MemoryFootprint peak_;
  std::uint64_t admitted_ = 0, started_ = 0, completed_ = 0, dropped_ = 0;
};

}  // namespace nkfg
