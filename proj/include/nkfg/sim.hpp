#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nkfg/planner.hpp"
#include "nkfg/profile.hpp"
#include "nkfg/strategies.hpp"
#include "nkfg/timing.hpp"

namespace nkfg {

struct TracePoint {
  Micros at{0};
  NetworkConditions net;

  friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

// Step changes in operating conditions; the first point is at t = 0.
struct NetworkTrace {
  std::vector<TracePoint> points;

  void validate() const;
  const NetworkConditions& initial() const { return points.front().net; }
};

struct SweepGrid {
  std::vector<double> cpu_pct;
  std::vector<double> mem_pct;
  std::vector<double> fps;
  std::vector<Strategy> strategies;
  std::vector<std::pair<double, double>> bandwidth_changes;  // (from, to) Mbps
  Micros change_at{10'000'000};
};

struct LiveOptions {
  std::size_t payload_bytes = 1000;  // device -> edge frame size
  double burst_mb = 0.01;
  Micros settle{1'000'000};          // steady flow before each trigger
  Micros observe{1'000'000};         // flow kept after each transition
  int trials = 10;
  std::filesystem::path executable;  // nkfg binary hosting the roles
};

struct ExperimentConfig {
  std::filesystem::path profile_path;
  ProfileFormat profile_format = ProfileFormat::layer_list;
  std::optional<DnnProfile> profile;  // when set, used instead of profile_path
  NetworkTrace trace;
  Strategy strategy = Strategy::pause_resume;
  TimingParams timing;
  double fps = 10.0;
  Micros duration{30'000'000};
  std::size_t queue_capacity = 1;
  std::uint64_t seed = 1;
  double min_gain = 0.0;
  Micros monitor_delay{0};
  bool base_image_cached = true;
  MemoryModel memory;
  double service_jitter = 0.0;  // uniform relative jitter on service time
  std::optional<SweepGrid> grid;
  LiveOptions live;

  void validate() const;
  DnnProfile load() const;
};

enum class EventKind {
  frame_arrive,
  frame_start,
  frame_complete,
  frame_drop,
  net_change,
  transition_start,
  transition_end,
  container_state,
};
std::string to_string(EventKind k);
EventKind parse_event_kind(const std::string& text);

struct LogEvent {
  Micros t{0};
  EventKind kind = EventKind::frame_arrive;
  nlohmann::json payload = nlohmann::json::object();

  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

struct MetricsLog {
  std::vector<LogEvent> events;
  Micros duration{0};

  void append(Micros t, EventKind kind, nlohmann::json payload = nlohmann::json::object());
  std::string to_jsonl() const;
  static MetricsLog from_jsonl(std::istream& in);

  friend bool operator==(const MetricsLog&, const MetricsLog&) = default;
};

struct ExperimentResult {
  MetricsLog log;
  std::vector<TransitionReport> transitions;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Frame drops per second inside [start, end).
double frame_drop_rate(const MetricsLog& log, Micros start, Micros end);

struct TransitionSummary {
  std::size_t index = 0;
  std::string strategy;
  DowntimeKind kind = DowntimeKind::full_outage;
  Micros start{0};
  Micros end{0};
  Micros downtime{0};  // measured from admissions (outage) or the window (degraded)
  std::uint64_t drops = 0;
  std::uint64_t degraded = 0;
  std::string memory_initial_mb;
  std::string memory_additional_mb;
  std::string memory_total_mb;
  bool memory_transient = false;
  std::size_t old_split = 0;
  std::size_t new_split = 0;
};

struct LatencyStats {
  std::uint64_t count = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
};

struct RunSummary {
  std::uint64_t arrivals = 0;
  std::uint64_t admissions = 0;  // frames taken into service at the edge
  std::uint64_t completions = 0;
  std::uint64_t drops = 0;
  std::uint64_t in_system = 0;
  LatencyStats latency;
  std::vector<TransitionSummary> transitions;
};

// Recomputes every summary figure from the raw events alone.
RunSummary summarize(const MetricsLog& log);
std::string summary_csv(const RunSummary& summary);

// Longest interval inside [start, end] with no frame_start event.
Micros longest_admission_gap(const MetricsLog& log, Micros start, Micros end);

struct SweepRow {
  double cpu_pct = 100.0;
  double mem_pct = 100.0;
  double fps = 0.0;
  Strategy strategy = Strategy::pause_resume;
  std::string bandwidth_change;
  std::optional<double> downtime_ms;  // empty when no repartition fired
  std::uint64_t drops = 0;
  std::uint64_t degraded = 0;
  bool infeasible = false;
};

// Cells at or below this memory availability cannot host the DNN.
inline constexpr double kMinFeasibleMemPct = 10.0;

using CellRunner = std::function<ExperimentResult(const ExperimentConfig&)>;

// One row per grid cell in (bandwidth change, strategy, fps, cpu, mem)
// order. Each feasible cell runs a single-step trace through `runner`.
std::vector<SweepRow> sweep(const ExperimentConfig& base, const SweepGrid& grid, unsigned workers = 1,
                            const CellRunner& runner = run_experiment);
std::string sweep_csv(const std::vector<SweepRow>& rows);

std::string format_ms(Micros d);

}  // namespace nkfg
