#include "nkfg/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "nkfg/clock.hpp"
#include "nkfg/error.hpp"

namespace nkfg {

using json = nlohmann::json;

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::frame_arrive: return "frame_arrive";
    case EventKind::frame_start: return "frame_start";
    case EventKind::frame_complete: return "frame_complete";
    case EventKind::frame_drop: return "frame_drop";
    case EventKind::net_change: return "net_change";
    case EventKind::transition_start: return "transition_start";
    case EventKind::transition_end: return "transition_end";
    case EventKind::container_state: return "container_state";
  }
  return "?";
}

EventKind parse_event_kind(const std::string& text) {
  for (auto k : {EventKind::frame_arrive, EventKind::frame_start, EventKind::frame_complete,
                 EventKind::frame_drop, EventKind::net_change, EventKind::transition_start,
                 EventKind::transition_end, EventKind::container_state}) {
    if (to_string(k) == text) return k;
  }
  throw ParseError("unknown event kind \"" + text + "\"");
}

std::string format_ms(Micros d) {
  const auto us = d.count();
  const auto sign = us < 0 ? "-" : "";
  const auto a = us < 0 ? -us : us;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%lld.%03lld", sign, static_cast<long long>(a / 1000),
                static_cast<long long>(a % 1000));
  return buf;
}

void NetworkTrace::validate() const {
  if (points.empty()) throw ValidationError("trace: at least one point is required");
  if (points.front().at.count() != 0) throw ValidationError("trace: first point must be at t = 0");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i > 0 && points[i].at <= points[i - 1].at) {
      throw ValidationError("trace: point " + std::to_string(i) + " is not strictly after its predecessor");
    }
    try {
      nkfg::validate(points[i].net);
    } catch (const ValidationError& e) {
      throw ValidationError("trace[" + std::to_string(i) + "]: " + e.what());
    }
  }
}

void ExperimentConfig::validate() const {
  trace.validate();
  nkfg::validate(timing);
  if (!std::isfinite(fps) || fps < 0.0) throw ValidationError("fps must be >= 0");
  if (duration.count() <= 0) throw ValidationError("duration_ms must be > 0");
  if (queue_capacity == 0) throw ValidationError("queue_capacity must be >= 1");
  if (!(min_gain >= 0.0)) throw ValidationError("min_gain must be >= 0");
  if (monitor_delay.count() < 0) throw ValidationError("monitor_delay_ms must be >= 0");
  if (!(service_jitter >= 0.0 && service_jitter < 1.0)) {
    throw ValidationError("service_jitter must lie in [0, 1)");
  }
  if (!(memory.container_mb >= 0.0) || !(memory.in_container_pipeline_mb >= 0.0)) {
    throw ValidationError("memory costs must be >= 0");
  }
}

DnnProfile ExperimentConfig::load() const {
  if (profile) {
    nkfg::validate(*profile);
    return *profile;
  }
  return load_sequential_profile(profile_path, profile_format);
}

void MetricsLog::append(Micros t, EventKind kind, json payload) {
  if (!events.empty() && t < events.back().t) {
    throw StateError("metrics log: event at " + format_ms(t) + " ms precedes the previous event");
  }
  events.push_back({t, kind, std::move(payload)});
}

std::string MetricsLog::to_jsonl() const {
  std::string out;
  for (const auto& e : events) {
    json line = e.payload;
    line["t_us"] = e.t.count();
    line["kind"] = to_string(e.kind);
    out += line.dump();
    out += '\n';
  }
  return out;
}

MetricsLog MetricsLog::from_jsonl(std::istream& in) {
  MetricsLog log;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError("events line " + std::to_string(line) + ": " + e.what());
    }
    if (!j.contains("t_us") || !j.contains("kind")) {
      throw ParseError("events line " + std::to_string(line) + ": missing t_us or kind");
    }
    const Micros t{j["t_us"].get<std::int64_t>()};
    const auto kind = parse_event_kind(j["kind"].get<std::string>());
    j.erase("t_us");
    j.erase("kind");
    log.append(t, kind, std::move(j));
  }
  if (!log.events.empty()) log.duration = log.events.back().t;
  return log;
}

namespace {

json net_json(const NetworkConditions& n) {
  return {{"bandwidth_mbps", n.bandwidth_mbps},
          {"latency_ms", n.latency_ms},
          {"cpu_availability", n.cpu_availability},
          {"memory_availability", n.memory_availability}};
}

Micros arrival_time(std::uint64_t k, double fps) {
  return Micros{static_cast<std::int64_t>(std::floor(static_cast<double>(k) * 1e6 / fps))};
}

// One simulated world around a virtual clock and a deployment.
class Experiment {
 public:
  explicit Experiment(const ExperimentConfig& config)
      : config_(config), profile_(config.load()), rng_(config.seed) {
    net_ = config_.trace.initial();
    const auto plan = optimal_split(profile_, net_);
    DeploymentOptions options{config_.queue_capacity, config_.base_image_cached, config_.memory};
    deployment_ = std::make_unique<Deployment>(make_deployment(config_.strategy, plan, options));
    deployment_->set_observer([this](const DeploymentEvent& e) { on_deployment(e); });
  }

  ExperimentResult run() {
    const auto& points = config_.trace.points;
    log_.append(Micros{0}, EventKind::net_change, net_json(net_));
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (points[i].at >= config_.duration) break;
      clock_.schedule_at(points[i].at, [this, net = points[i].net] { on_net_change(net); });
    }
    if (config_.fps > 0.0) clock_.schedule_at(Micros{0}, [this] { on_arrival(); });
    clock_.run();
    log_.duration = std::max(config_.duration, clock_.now());
    if (deployment_->in_system() != 0) throw StateError("simulation ended with frames in the system");
    return {std::move(log_), std::move(reports_)};
  }

 private:
  void on_net_change(const NetworkConditions& net) {
    net_ = net;
    log_.append(clock_.now(), EventKind::net_change, net_json(net));
    after(clock_, config_.monitor_delay, [this] { check_repartition(); });
  }

  bool draining() const {
    for (const auto& p : deployment_->pipelines()) {
      if (p.role == PipelineRole::draining) return true;
    }
    return false;
  }

  void check_repartition() {
    if (transition_open_ || draining()) {
      recheck_pending_ = true;
      return;
    }
    recheck_pending_ = false;
    const auto decision =
        should_repartition(deployment_->active().plan, profile_, net_, config_.min_gain);
    if (!decision.repartition) return;

    transition_open_ = true;
    window_first_event_ = log_.events.size();
    log_.append(clock_.now(), EventKind::transition_start,
                {{"index", reports_.size()},
                 {"strategy", to_string(config_.strategy)},
                 {"old_split", deployment_->active().plan.split},
                 {"new_split", decision.plan->split}});
    begin_transition(*deployment_, clock_, config_.strategy, *decision.plan, config_.timing,
                     [this](TransitionReport r) { on_transition_done(std::move(r)); });
  }

  void on_transition_done(TransitionReport r) {
    for (std::size_t i = window_first_event_; i < log_.events.size(); ++i) {
      const auto& e = log_.events[i];
      if (e.t < r.window.start || e.t >= r.window.end) continue;
      if (e.kind == EventKind::frame_drop) ++r.frames_dropped;
      if (e.kind == EventKind::frame_complete && e.payload["pipeline"].get<PipelineId>() == r.from) {
        ++r.frames_degraded;
      }
    }
    log_.append(clock_.now(), EventKind::transition_end,
                {{"index", reports_.size()},
                 {"strategy", to_string(r.strategy)},
                 {"downtime_kind", to_string(r.downtime_kind)},
                 {"start_us", r.window.start.count()},
                 {"downtime_us", r.t_downtime.count()},
                 {"frames_dropped", r.frames_dropped},
                 {"frames_degraded", r.frames_degraded},
                 {"from", r.from},
                 {"to", r.to},
                 {"memory_initial_mb", DeciMB::from_mb(r.memory.initial_mb).str()},
                 {"memory_additional_mb", DeciMB::from_mb(r.memory.additional_mb).str()},
                 {"memory_total_mb", DeciMB::from_mb(r.memory.total_mb).str()},
                 {"memory_transient", r.memory.transient}});
    reports_.push_back(std::move(r));
    transition_open_ = false;
    pump();
    if (recheck_pending_) check_repartition();
  }

  void on_deployment(const DeploymentEvent& e) {
    using K = DeploymentEvent::Kind;
    switch (e.kind) {
      case K::container_state:
        log_.append(clock_.now(), EventKind::container_state,
                    {{"container", e.container}, {"from", to_string(e.from)}, {"to", to_string(e.to)}});
        if (e.to == ContainerState::paused) freeze(e.container);
        if (e.from == ContainerState::paused && e.to == ContainerState::running) thaw(e.container);
        break;
      case K::pipeline_retired:
        if (recheck_pending_ && !transition_open_) {
          // Deferred so the retirement finishes before a new transition starts.
          clock_.schedule(Micros{0}, [this] {
            if (recheck_pending_) check_repartition();
          });
        }
        break;
      default:
        break;
    }
    // Frame starts wait for the triggering operation to settle; the pump
    // runs from the event loop at the same virtual instant.
    if (!pump_scheduled_) {
      pump_scheduled_ = true;
      clock_.schedule(Micros{0}, [this] {
        pump_scheduled_ = false;
        pump();
      });
    }
  }

  void on_arrival() {
    const auto seq = next_seq_++;
    Frame f{seq, clock_.now(), profile_.input_size_mb, FrameStatus::queued};
    const auto r = deployment_->admit(f);
    log_.append(clock_.now(), EventKind::frame_arrive, {{"seq", seq}, {"pipeline", r.pipeline}});
    if (r.dropped) {
      log_.append(clock_.now(), EventKind::frame_drop,
                  {{"seq", r.dropped->seq}, {"pipeline", r.pipeline}});
    }
    pump();
    const auto next = arrival_time(next_seq_, config_.fps);
    if (next < config_.duration) clock_.schedule_at(next, [this] { on_arrival(); });
  }

  Micros service_time(const Pipeline& p) {
    double ms = estimate_latency(profile_, p.plan.split, net_).t_total;
    if (config_.service_jitter > 0.0) {
      std::uniform_real_distribution<double> u(-config_.service_jitter, config_.service_jitter);
      ms *= 1.0 + u(rng_);
    }
    return round_micros(ms);
  }

  void pump() {
    for (const auto& p : deployment_->pipelines()) {
      const auto id = p.id;
      if (inflight_.count(id) || frozen_.count(id)) continue;
      auto f = deployment_->start_next(id);
      if (!f) continue;
      const auto& pl = deployment_->pipeline(id);
      log_.append(clock_.now(), EventKind::frame_start,
                  {{"seq", f->seq}, {"pipeline", id}, {"split", pl.plan.split}});
      const auto due = clock_.now() + service_time(pl);
      const auto ev = clock_.schedule_at(due, [this, id] { on_complete(id); });
      inflight_[id] = {ev, due};
    }
  }

  void on_complete(PipelineId id) {
    inflight_.erase(id);
    const auto split = deployment_->pipeline(id).plan.split;
    const auto f = deployment_->complete(id);
    log_.append(clock_.now(), EventKind::frame_complete,
                {{"seq", f.seq},
                 {"pipeline", id},
                 {"split", split},
                 {"latency_us", (clock_.now() - f.arrival).count()}});
    pump();
  }

  // A paused container suspends the frame in service; the remaining
  // service time is resumed on thaw.
  void freeze(ContainerId c) {
    for (const auto& p : deployment_->pipelines()) {
      if (p.edge != c && p.cloud != c) continue;
      auto it = inflight_.find(p.id);
      if (it == inflight_.end()) continue;
      clock_.cancel(it->second.event);
      frozen_[p.id] = it->second.due - clock_.now();
      inflight_.erase(it);
    }
  }

  void thaw(ContainerId c) {
    for (const auto& p : deployment_->pipelines()) {
      if (p.edge != c && p.cloud != c) continue;
      if (!deployment_->can_process(p.id)) continue;
      auto it = frozen_.find(p.id);
      if (it == frozen_.end()) continue;
      const auto id = p.id;
      const auto due = clock_.now() + it->second;
      frozen_.erase(it);
      const auto ev = clock_.schedule_at(due, [this, id] { on_complete(id); });
      inflight_[id] = {ev, due};
    }
  }

  struct InFlight {
    EventId event;
    Micros due;
  };

  const ExperimentConfig& config_;
  DnnProfile profile_;
  std::mt19937_64 rng_;
  VirtualClock clock_;
  NetworkConditions net_;
  std::unique_ptr<Deployment> deployment_;
  MetricsLog log_;
  std::vector<TransitionReport> reports_;
  std::map<PipelineId, InFlight> inflight_;
  std::map<PipelineId, Micros> frozen_;
  std::uint64_t next_seq_ = 0;
  bool transition_open_ = false;
  bool recheck_pending_ = false;
  bool pump_scheduled_ = false;
  std::size_t window_first_event_ = 0;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  return Experiment(config).run();
}

double frame_drop_rate(const MetricsLog& log, Micros start, Micros end) {
  if (end <= start) throw ValidationError("frame_drop_rate: window is empty or inverted");
  if (start.count() < 0 || (log.duration.count() > 0 && end > log.duration)) {
    throw ValidationError("frame_drop_rate: window lies outside the experiment");
  }
  std::uint64_t drops = 0;
  for (const auto& e : log.events) {
    if (e.kind == EventKind::frame_drop && e.t >= start && e.t < end) ++drops;
  }
  return static_cast<double>(drops) / (static_cast<double>((end - start).count()) / 1e6);
}

Micros longest_admission_gap(const MetricsLog& log, Micros start, Micros end) {
  Micros last = start;
  Micros longest{0};
  for (const auto& e : log.events) {
    if (e.kind != EventKind::frame_start || e.t <= start || e.t >= end) continue;
    longest = std::max(longest, e.t - last);
    last = e.t;
  }
  return std::max(longest, end - last);
}

RunSummary summarize(const MetricsLog& log) {
  RunSummary s;
  std::vector<std::int64_t> latencies;
  std::map<std::size_t, TransitionSummary> open;
  for (const auto& e : log.events) {
    switch (e.kind) {
      case EventKind::frame_arrive: ++s.arrivals; break;
      case EventKind::frame_start: ++s.admissions; break;
      case EventKind::frame_complete:
        ++s.completions;
        latencies.push_back(e.payload.at("latency_us").get<std::int64_t>());
        break;
      case EventKind::frame_drop: ++s.drops; break;
      case EventKind::transition_start: {
        TransitionSummary t;
        t.index = e.payload.at("index").get<std::size_t>();
        t.strategy = e.payload.at("strategy").get<std::string>();
        t.start = e.t;
        t.old_split = e.payload.at("old_split").get<std::size_t>();
        t.new_split = e.payload.at("new_split").get<std::size_t>();
        open[t.index] = t;
        break;
      }
      case EventKind::transition_end: {
        const auto index = e.payload.at("index").get<std::size_t>();
        auto it = open.find(index);
        if (it == open.end()) throw ParseError("transition_end without a matching start");
        auto t = it->second;
        open.erase(it);
        t.end = e.t;
        t.kind = e.payload.at("downtime_kind").get<std::string>() == "full_outage"
                     ? DowntimeKind::full_outage
                     : DowntimeKind::degraded;
        t.memory_initial_mb = e.payload.at("memory_initial_mb").get<std::string>();
        t.memory_additional_mb = e.payload.at("memory_additional_mb").get<std::string>();
        t.memory_total_mb = e.payload.at("memory_total_mb").get<std::string>();
        t.memory_transient = e.payload.at("memory_transient").get<bool>();
        const auto from = e.payload.at("from").get<PipelineId>();
        for (const auto& f : log.events) {
          if (f.t < t.start || f.t >= t.end) continue;
          if (f.kind == EventKind::frame_drop) ++t.drops;
          if (f.kind == EventKind::frame_complete && f.payload.at("pipeline").get<PipelineId>() == from) {
            ++t.degraded;
          }
        }
        t.downtime = t.kind == DowntimeKind::full_outage ? longest_admission_gap(log, t.start, t.end)
                                                         : t.end - t.start;
        s.transitions.push_back(t);
        break;
      }
      default: break;
    }
  }
  s.in_system = s.arrivals - s.completions - s.drops;
  if (!latencies.empty()) {
    std::sort(latencies.begin(), latencies.end());
    const auto pick = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(latencies.size()))) - 1;
      return static_cast<double>(latencies[std::min(idx, latencies.size() - 1)]) / 1000.0;
    };
    double sum = 0.0;
    for (auto l : latencies) sum += static_cast<double>(l);
    s.latency = {latencies.size(), sum / static_cast<double>(latencies.size()) / 1000.0, pick(0.5),
                 pick(0.95), static_cast<double>(latencies.back()) / 1000.0};
  }
  return s;
}

std::string summary_csv(const RunSummary& s) {
  std::ostringstream out;
  out << "transition,strategy,downtime_kind,start_ms,end_ms,downtime_ms,drops,degraded,"
         "memory_initial_mb,memory_additional_mb,memory_total_mb,memory_transient,old_split,"
         "new_split\n";
  for (const auto& t : s.transitions) {
    out << t.index << ',' << t.strategy << ',' << to_string(t.kind) << ',' << format_ms(t.start)
        << ',' << format_ms(t.end) << ',' << format_ms(t.downtime) << ',' << t.drops << ','
        << t.degraded << ',' << t.memory_initial_mb << ',' << t.memory_additional_mb << ','
        << t.memory_total_mb << ',' << (t.memory_transient ? "true" : "false") << ','
        << t.old_split << ',' << t.new_split << '\n';
  }
  return out.str();
}

namespace {

std::string number(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

SweepRow run_cell(const ExperimentConfig& base, const CellRunner& runner, double cpu, double mem, double fps, Strategy strategy,
                  std::pair<double, double> change, Micros change_at) {
  SweepRow row;
  row.cpu_pct = cpu;
  row.mem_pct = mem;
  row.fps = fps;
  row.strategy = strategy;
  row.bandwidth_change = number(change.first) + "->" + number(change.second);
  if (mem <= kMinFeasibleMemPct) {
    row.infeasible = true;
    return row;
  }
  ExperimentConfig cfg = base;
  cfg.grid.reset();
  cfg.fps = fps;
  cfg.strategy = strategy;
  NetworkConditions net = base.trace.initial();
  net.cpu_availability = cpu / 100.0;
  net.memory_availability = mem / 100.0;
  net.bandwidth_mbps = change.first;
  NetworkConditions next = net;
  next.bandwidth_mbps = change.second;
  cfg.trace.points = {{Micros{0}, net}, {change_at, next}};
  const auto result = runner(cfg);
  if (!result.transitions.empty()) {
    const auto& r = result.transitions.front();
    row.downtime_ms = to_ms(r.t_downtime);
    row.drops = r.frames_dropped;
    row.degraded = r.frames_degraded;
  }
  return row;
}

}  // namespace

std::vector<SweepRow> sweep(const ExperimentConfig& base, const SweepGrid& grid, unsigned workers,
                            const CellRunner& runner) {
  base.validate();
  const auto& initial = base.trace.initial();
  auto or_default = [](std::vector<double> v, double d) { return v.empty() ? std::vector<double>{d} : v; };
  const auto cpus = or_default(grid.cpu_pct, initial.cpu_availability * 100.0);
  const auto mems = or_default(grid.mem_pct, initial.memory_availability * 100.0);
  const auto fpss = or_default(grid.fps, base.fps);
  const auto strategies = grid.strategies.empty() ? std::vector<Strategy>{base.strategy} : grid.strategies;
  auto changes = grid.bandwidth_changes;
  if (changes.empty()) {
    if (base.trace.points.size() < 2) throw ValidationError("sweep: no bandwidth change configured");
    changes.emplace_back(initial.bandwidth_mbps, base.trace.points[1].net.bandwidth_mbps);
  }
  for (double v : cpus) {
    if (!(v > 0.0 && v <= 100.0)) throw ValidationError("sweep: cpu_pct entries must lie in (0, 100]");
  }
  for (double v : mems) {
    if (!(v > 0.0 && v <= 100.0)) throw ValidationError("sweep: mem_pct entries must lie in (0, 100]");
  }

  struct Cell {
    double cpu, mem, fps;
    Strategy strategy;
    std::pair<double, double> change;
  };
  std::vector<Cell> cells;
  for (const auto& ch : changes)
    for (auto st : strategies)
      for (double f : fpss)
        for (double c : cpus)
          for (double m : mems) cells.push_back({c, m, f, st, ch});
  if (cells.empty()) throw ValidationError("sweep: grid is empty");

  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cells.size());
  auto work = [&] {
    for (auto i = next++; i < cells.size(); i = next++) {
      try {
        const auto& c = cells[i];
        rows[i] = run_cell(base, runner, c.cpu, c.mem, c.fps, c.strategy, c.change, grid.change_at);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(cells.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "cpu_pct,mem_pct,fps,strategy,bandwidth_change,downtime_ms,drops,degraded,infeasible\n";
  for (const auto& r : rows) {
    out << number(r.cpu_pct) << ',' << number(r.mem_pct) << ',' << number(r.fps) << ','
        << to_string(r.strategy) << ',' << r.bandwidth_change << ',';
    if (r.downtime_ms && !r.infeasible) out << format_ms(round_micros(*r.downtime_ms));
    out << ',';
    if (!r.infeasible) out << r.drops;
    out << ',';
    if (!r.infeasible) out << r.degraded;
    out << ',' << (r.infeasible ? "true" : "false") << '\n';
  }
  return out.str();
}

}  // namespace nkfg
