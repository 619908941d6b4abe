#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>

#include "nkfg/config.hpp"
#include "nkfg/error.hpp"
#include "nkfg/live/realtime.hpp"
#include "worker.hpp"

namespace nkfg::live {

namespace {

using json = nlohmann::json;

constexpr Micros kHeartbeatLoss{2'000'000};

struct RawEvent {
  Micros t;
  EventKind kind;
  json payload;
};

// Owns the deployment model and all control traffic. Frame events flow in
// from the edge; transitions run on the realtime scheduler.
class Coordinator {
 public:
  explicit Coordinator(const RoleArgs& args)
      : config_(load(args)), profile_(config_.load()), listener_(listen_loopback(args.port)) {
    for (const auto& [role, port] : {std::pair{"edge", args.edge_port}, {"cloud", args.cloud_port},
                                     {"device", args.device_port}}) {
      connect_worker(role, port);
    }
    net_ = config_.trace.initial();
    DeploymentOptions options{config_.queue_capacity, config_.base_image_cached, config_.memory};
    deployment_ = std::make_unique<Deployment>(
        make_deployment(config_.strategy, optimal_split(profile_, net_), options));
  }

  int run() {
    sched_.run_sync([this] {
      command("edge", shape_command(net_));
      for (const auto& p : deployment_->pipelines()) send_plan(p.id);
      command("edge", {{"op", "switch"}, {"pipeline", deployment_->dispatcher_target()}});
      deployment_->set_observer([this](const DeploymentEvent& e) { on_deployment(e); });
    });
    t0_ = mono_now();
    record(net_change_event(t0_));
    command("device", {{"op", "start"}});
    monitor_ = std::thread([this] { monitor(); });

    std::cout << "READY " << listener_.port << std::endl;
    Fd fd;
    while (!(fd = accept_for(listener_, Micros{100'000}))) {
    }
    auto hello = read_frame(fd.get());
    write_frame(fd.get(), WireFrame::with_text(FrameKind::data, 0, 0, json{{"hello", "coordinator"}}.dump()));
    if (!hello) return 3;
    harness_ = std::make_shared<Link>(std::move(fd));
    std::mutex done_mu;
    std::condition_variable done_cv;
    bool done = false;
    harness_->start([this](WireFrame f) { on_request(parse_message(f)); },
                    [&] {
                      std::lock_guard lock(done_mu);
                      done = true;
                      done_cv.notify_all();
                    });
    std::unique_lock lock(done_mu);
    done_cv.wait(lock, [&] { return done; });
    shutdown_workers();
    return 0;
  }

 private:
  static ExperimentConfig load(const RoleArgs& args) {
    auto path = args.config;
    if (path.empty()) {
      const char* env = std::getenv("NEUKONFIG_CONFIG");
      if (!env) throw ConfigError("coordinator: no config (set --config or NEUKONFIG_CONFIG)");
      path = env;
    }
    return load_config(path);
  }

  void connect_worker(const std::string& role, std::uint16_t port) {
    auto fd = connect_loopback(port, kHandshakeTimeout, role);
    if (!write_frame(fd.get(), WireFrame::with_text(FrameKind::data, 0, 0, json{{"hello", "coordinator"}}.dump()))) {
      throw Error(role + ": handshake failed");
    }
    auto reply = read_frame(fd.get());
    if (!reply || parse_message(*reply).value("hello", "") != role) {
      throw Error(role + ": handshake failed");
    }
    auto link = std::make_shared<Link>(std::move(fd));
    {
      std::lock_guard lock(mu_);
      workers_[role] = link;
      last_heartbeat_[role] = mono_now();
    }
    link->start([this, role](WireFrame f) { on_worker(role, parse_message(f)); },
                [this, role] { worker_lost(role, "connection closed"); });
  }

  // Sends a command and waits for its ack.
  void command(const std::string& role, json c) {
    std::shared_ptr<Link> link;
    std::uint64_t id;
    {
      std::lock_guard lock(mu_);
      id = ++next_command_;
      link = workers_.at(role);
    }
    c["id"] = id;
    const auto op = c.value("op", "");
    link->send_text(kind_for_op(op), c.dump(), id);
    std::unique_lock lock(mu_);
    if (!ack_cv_.wait_for(lock, kAckTimeout, [&] { return acked_.count(id) > 0 || lost_; })) {
      throw Error(role + ": no acknowledgement for " + op);
    }
    if (!acked_.count(id)) throw Error(role + ": worker lost during " + op);
    acked_.erase(id);
  }

  json shape_command(const NetworkConditions& net) const {
    return {{"op", "shape"},
            {"rate_mbps", net.bandwidth_mbps},
            {"burst_mb", config_.live.burst_mb},
            {"latency_ms", net.latency_ms}};
  }

  void send_plan(PipelineId id) {
    const auto& plan = deployment_->pipeline(id).plan;
    const auto bytes = static_cast<std::size_t>(std::llround(payload_mb(profile_, plan.split) * 1e6 / 8.0));
    command("edge", {{"op", "plan"},
                     {"pipeline", id},
                     {"split", plan.split},
                     {"edge_us", round_micros(plan.breakdown.t_edge).count()},
                     {"payload_bytes", bytes}});
    command("cloud", {{"op", "plan"}, {"pipeline", id}, {"cloud_us", round_micros(plan.breakdown.t_cloud).count()}});
  }

  void on_deployment(const DeploymentEvent& e) {
    using K = DeploymentEvent::Kind;
    switch (e.kind) {
      case K::container_state:
        record({mono_now(), EventKind::container_state,
                {{"container", e.container}, {"from", to_string(e.from)}, {"to", to_string(e.to)}}});
        break;
      case K::pipeline_spawned:
      case K::plan_updated:
        send_plan(e.pipeline);
        break;
      case K::paused:
        command("edge", {{"op", "pause"}, {"pipeline", e.pipeline}});
        command("cloud", {{"op", "pause"}, {"pipeline", e.pipeline}});
        paused_at_ = mono_now();
        break;
      case K::resumed:
        command("edge", {{"op", "resume"}, {"pipeline", e.pipeline}});
        command("cloud", {{"op", "resume"}, {"pipeline", e.pipeline}});
        break;
      case K::dispatcher_switched:
        command("edge", {{"op", "switch"}, {"pipeline", e.pipeline}});
        break;
      case K::pipeline_retired:
        command("edge", {{"op", "retire"}, {"pipeline", e.pipeline}});
        break;
      default:
        break;
    }
  }

  void on_worker(const std::string& role, const json& m) {
    std::lock_guard lock(mu_);
    if (m.contains("ack")) {
      acked_.insert(m["ack"].get<std::uint64_t>());
      ack_cv_.notify_all();
    } else if (m.contains("heartbeat")) {
      ++heartbeats_[role];
      last_heartbeat_[role] = mono_now();
    } else if (m.contains("event")) {
      auto payload = m;
      const Micros t{payload["t_us"].get<std::int64_t>()};
      const auto kind = parse_event_kind(payload["event"].get<std::string>());
      payload.erase("t_us");
      payload.erase("event");
      ++counts_[to_string(kind)];
      events_.push_back({t, kind, std::move(payload)});
    }
  }

  void record(RawEvent e) {
    std::lock_guard lock(mu_);
    events_.push_back(std::move(e));
  }

  RawEvent net_change_event(Micros t) const {
    return {t, EventKind::net_change,
            {{"bandwidth_mbps", net_.bandwidth_mbps},
             {"latency_ms", net_.latency_ms},
             {"cpu_availability", net_.cpu_availability},
             {"memory_availability", net_.memory_availability}}};
  }

  void monitor() {
    while (true) {
      std::this_thread::sleep_for(kHeartbeatPeriod);
      std::string stale;
      {
        std::lock_guard lock(mu_);
        if (stopping_) return;
        for (const auto& [role, at] : last_heartbeat_) {
          if (mono_now() - at > kHeartbeatLoss) stale = role;
        }
      }
      if (!stale.empty()) worker_lost(stale, "heartbeats stopped");
    }
  }

  void worker_lost(const std::string& role, const std::string& why) {
    std::vector<PipelineId> dead;
    {
      std::lock_guard lock(mu_);
      if (stopping_ || lost_) return;
      lost_ = true;
      ack_cv_.notify_all();
    }
    // The model is only read here; the process ends right after.
    for (const auto& p : deployment_->pipelines()) {
      if (p.role == PipelineRole::active || p.role == PipelineRole::redundant) dead.push_back(p.id);
    }
    std::cerr << "coordinator: " << role << " worker lost (" << why << "); pipelines";
    for (auto id : dead) std::cerr << ' ' << id;
    std::cerr << " dead, aborting run" << std::endl;
    if (harness_) {
      harness_->send_text(FrameKind::data,
                          json{{"event", "pipeline_dead"}, {"role", role}, {"reason", why}, {"pipelines", dead}}.dump());
      harness_->flush();
    }
    shutdown_workers();
    std::fflush(nullptr);
    ::_exit(3);
  }

  void shutdown_workers() {
    std::map<std::string, std::shared_ptr<Link>> workers;
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      workers = workers_;
    }
    for (auto& [role, link] : workers) {
      if (!link->open()) continue;
      link->send_text(FrameKind::data, json{{"op", "shutdown"}, {"id", 0}}.dump());
      link->flush();
    }
  }

  void reply(const json& request, json body) {
    body["reply"] = request.value("id", 0);
    harness_->send_text(FrameKind::data, body.dump());
  }

  void on_request(const json& r) {
    const auto op = r.value("op", "");
    if (op == "trigger") {
      sched_.schedule(Micros{0}, [this, r] {
        try {
          trigger(r);
        } catch (const std::exception& e) {
          reply(r, {{"error", e.what()}});
        }
      });
    } else if (op == "status") {
      std::lock_guard lock(mu_);
      reply(r, {{"heartbeats", heartbeats_}, {"counts", counts_}, {"uptime_us", (mono_now() - t0_).count()}});
    } else if (op == "log") {
      reply(r, {{"jsonl", log().to_jsonl()}});
    } else if (op == "shutdown") {
      shutdown_workers();
      reply(r, json::object());
      harness_->flush();
      std::fflush(nullptr);
      ::_exit(0);
    } else {
      reply(r, {{"error", "unknown op \"" + op + "\""}});
    }
  }

  MetricsLog log() {
    std::vector<RawEvent> events;
    {
      std::lock_guard lock(mu_);
      events = events_;
    }
    std::stable_sort(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) { return a.t < b.t; });
    MetricsLog out;
    for (auto& e : events) out.append(std::max(Micros{0}, e.t - t0_), e.kind, std::move(e.payload));
    out.duration = std::max(Micros{0}, mono_now() - t0_);
    return out;
  }

  // Runs on the scheduler thread.
  void trigger(const json& r) {
    NetworkConditions next = net_;
    next.bandwidth_mbps = r.value("bandwidth_mbps", next.bandwidth_mbps);
    next.latency_ms = r.value("latency_ms", next.latency_ms);
    next.cpu_availability = r.value("cpu_availability", next.cpu_availability);
    next.memory_availability = r.value("memory_availability", next.memory_availability);
    nkfg::validate(next);
    const auto trigger_at = mono_now();
    net_ = next;
    record(net_change_event(trigger_at));
    command("edge", shape_command(next));
    const auto decision = should_repartition(deployment_->active().plan, profile_, net_, config_.min_gain);
    if (!decision.repartition) {
      reply(r, {{"repartition", false}});
      return;
    }
    const auto index = transitions_++;
    record({trigger_at, EventKind::transition_start,
            {{"index", index},
             {"strategy", to_string(config_.strategy)},
             {"old_split", deployment_->active().plan.split},
             {"new_split", decision.plan->split}}});
    paused_at_.reset();
    begin_transition(*deployment_, sched_, config_.strategy, *decision.plan, config_.timing,
                     [this, r, index, trigger_at](TransitionReport report) {
                       try {
                         finish(r, index, trigger_at, std::move(report));
                       } catch (const std::exception& e) {
                         reply(r, {{"error", e.what()}});
                       }
                     });
  }

  void finish(const json& r, std::size_t index, Micros trigger_at, TransitionReport report) {
    const auto end = mono_now();
    command("edge", {{"op", "sync"}});
    const auto start = trigger_at;
    const auto count_from = config_.strategy == Strategy::pause_resume && paused_at_ ? *paused_at_ : start;
    std::uint64_t admissions = 0, completions = 0, drops = 0;
    Micros last = start, gap{0};
    {
      std::lock_guard lock(mu_);
      for (const auto& e : events_) {
        if (e.kind == EventKind::frame_start && e.t > start && e.t < end) {
          gap = std::max(gap, e.t - last);
          last = e.t;
        }
        if (e.t < count_from || e.t >= end) continue;
        if (e.kind == EventKind::frame_start) ++admissions;
        if (e.kind == EventKind::frame_drop) ++drops;
        if (e.kind == EventKind::frame_complete && e.payload.value("pipeline", PipelineId{0}) == report.from) {
          ++completions;
        }
      }
    }
    gap = std::max(gap, end - last);
    report.window = {start, end};
    report.t_downtime = report.downtime_kind == DowntimeKind::full_outage ? gap : end - start;
    report.frames_dropped = drops;
    report.frames_degraded = completions;
    json body{{"index", index},
              {"strategy", to_string(report.strategy)},
              {"downtime_kind", to_string(report.downtime_kind)},
              {"start_us", (start - t0_).count()},
              {"downtime_us", report.t_downtime.count()},
              {"frames_dropped", drops},
              {"frames_degraded", completions},
              {"admissions", admissions},
              {"count_from_us", (count_from - t0_).count()},
              {"from", report.from},
              {"to", report.to},
              {"memory_initial_mb", DeciMB::from_mb(report.memory.initial_mb).str()},
              {"memory_additional_mb", DeciMB::from_mb(report.memory.additional_mb).str()},
              {"memory_total_mb", DeciMB::from_mb(report.memory.total_mb).str()},
              {"memory_transient", report.memory.transient}};
    record({end, EventKind::transition_end, body});
    body["repartition"] = true;
    body["old_split"] = report.old_split;
    body["new_split"] = report.new_split;
    reply(r, body);
  }

  ExperimentConfig config_;
  DnnProfile profile_;
  Listener listener_;
  RealtimeScheduler sched_;
  NetworkConditions net_;
  std::unique_ptr<Deployment> deployment_;
  std::shared_ptr<Link> harness_;
  std::thread monitor_;
  Micros t0_{0};
  std::optional<Micros> paused_at_;
  std::size_t transitions_ = 0;

  std::mutex mu_;
  std::condition_variable ack_cv_;
  std::map<std::string, std::shared_ptr<Link>> workers_;
  std::uint64_t next_command_ = 0;
  std::set<std::uint64_t> acked_;
  std::map<std::string, std::uint64_t> heartbeats_;
  std::map<std::string, Micros> last_heartbeat_;
  std::map<std::string, std::uint64_t> counts_;
  std::vector<RawEvent> events_;
  bool lost_ = false;
  bool stopping_ = false;
};

}  // namespace

int run_coordinator(const RoleArgs& args) { return Coordinator(args).run(); }

}  // namespace nkfg::live
