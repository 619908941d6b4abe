#pragma once

#include <sys/types.h>

#include <condition_variable>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "nkfg/sim.hpp"

namespace nkfg::live {

class Link;

struct RoleProcess {
  std::string name;
  pid_t pid = -1;
  std::uint16_t port = 0;
};

// Wall-clock outcome of one triggered network change.
struct LiveTrial {
  bool repartitioned = false;
  TransitionReport report;       // window and downtime in wall-clock microseconds
  std::uint64_t admissions = 0;  // frame_start inside the counting window
  nlohmann::json raw;
};

// The four role processes of one live deployment. Destruction shuts the
// run down and reaps every child.
class LiveRoles {
 public:
  ~LiveRoles();
  LiveRoles(const LiveRoles&) = delete;
  LiveRoles& operator=(const LiveRoles&) = delete;

  // Sends a request to the coordinator and waits for its reply.
  nlohmann::json request(nlohmann::json body, Micros timeout = Micros{60'000'000});
  nlohmann::json status();
  MetricsLog log();
  void shutdown();

  // Sends SIGKILL to one role, for fault injection.
  void kill(const std::string& role);
  // Set once the coordinator has reported a dead pipeline.
  std::optional<nlohmann::json> dead_report();
  // Waits for the coordinator process to exit and returns its status.
  std::optional<int> wait_coordinator(Micros timeout);

  const std::map<std::string, RoleProcess>& processes() const { return procs_; }

 private:
  friend std::unique_ptr<LiveRoles> start_roles(const ExperimentConfig&);
  LiveRoles() = default;
  void on_message(const nlohmann::json& m);

  std::map<std::string, RoleProcess> procs_;
  std::filesystem::path config_file_;
  std::unique_ptr<Link> link_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::uint64_t, nlohmann::json> replies_;
  std::optional<nlohmann::json> dead_;
  bool closed_ = false;
  std::uint64_t next_id_ = 0;
  std::optional<int> coordinator_status_;
};

// Executable that hosts the roles: config.live.executable, else the
// running binary.
std::filesystem::path role_executable(const ExperimentConfig& config);

// Spawns cloud, edge, device and coordinator (in that order) and connects
// to the coordinator. Errors name the role that failed to come up.
std::unique_ptr<LiveRoles> start_roles(const ExperimentConfig& config);

// Applies a network change and runs the configured strategy if it fires.
LiveTrial measure_transition(LiveRoles& roles, const NetworkConditions& next);

// Runs the config's trace in wall-clock time and returns the coordinator's log.
ExperimentResult run_live(const ExperimentConfig& config);

struct OrderingTrials {
  std::map<Strategy, std::vector<LiveTrial>> trials;
  std::map<Strategy, double> median_ms;
  std::map<Strategy, MetricsLog> logs;  // coordinator log of each strategy's run
};

// Alternates the first two bandwidths of the trace `trials` times per
// strategy, restarting the roles for each strategy.
OrderingTrials run_ordering_trials(const ExperimentConfig& config, const std::vector<Strategy>& strategies,
                                   int trials);

}  // namespace nkfg::live
