#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nkfg/planner.hpp"
#include "nkfg/profile.hpp"
#include "nkfg/sim.hpp"
#include "nkfg/strategies.hpp"
#include "nkfg/timing.hpp"

namespace nkfg::test {

inline std::filesystem::path source_dir() { return NKFG_SOURCE_DIR; }
inline std::filesystem::path cli_path() { return NKFG_CLI_PATH; }
inline std::filesystem::path vgg_profile() { return source_dir() / "profiles" / "vgg19_like.jsonl"; }
inline std::filesystem::path mobilenet_profile() { return source_dir() / "profiles" / "mobilenetv2_like.jsonl"; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("nkfg-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline DnnProfile make_profile(std::vector<double> edge, std::vector<double> cloud, double input,
                               std::vector<double> outputs, std::string name = "test") {
  DnnProfile p;
  p.name = std::move(name);
  p.input_size_mb = input;
  for (std::size_t i = 0; i < edge.size(); ++i) {
    p.units.push_back({i, "u" + std::to_string(i), edge[i], cloud[i], outputs[i]});
    p.block_map.push_back({i, i});
  }
  return p;
}

// edge (40, 60), cloud (0.5, 0.5), input 10, outputs (2, 1).
inline DnnProfile p2() { return make_profile({40, 60}, {0.5, 0.5}, 10, {2, 1}, "P2"); }

inline NetworkConditions net(double bandwidth, double latency = 0.0, double cpu = 1.0) {
  NetworkConditions n;
  n.bandwidth_mbps = bandwidth;
  n.latency_ms = latency;
  n.cpu_availability = cpu;
  return n;
}

inline DnnProfile random_profile(std::mt19937_64& rng, std::size_t max_units = 50) {
  std::uniform_int_distribution<std::size_t> count(1, max_units);
  std::uniform_real_distribution<double> time(0.1, 100.0);
  std::uniform_real_distribution<double> size(0.0, 50.0);
  const auto n = count(rng);
  DnnProfile p;
  p.name = "random";
  p.input_size_mb = size(rng);
  for (std::size_t i = 0; i < n; ++i) {
    p.units.push_back({i, "r" + std::to_string(i), time(rng), time(rng), size(rng)});
    p.block_map.push_back({i, i});
  }
  return p;
}

inline NetworkConditions random_conditions(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> bw(0.5, 200.0);
  std::uniform_real_distribution<double> lat(0.0, 100.0);
  std::uniform_real_distribution<double> frac(0.05, 1.0);
  NetworkConditions n;
  n.bandwidth_mbps = bw(rng);
  n.latency_ms = lat(rng);
  n.cpu_availability = frac(rng);
  n.memory_availability = frac(rng);
  return n;
}

// Latency of one split, summed from scratch in extended precision.
inline long double brute_force_total(const DnnProfile& p, std::size_t split, const NetworkConditions& n) {
  long double edge = 0, cloud = 0;
  for (std::size_t i = 0; i < split; ++i) edge += p.units[i].edge_time_ms;
  for (std::size_t i = split; i < p.units.size(); ++i) cloud += p.units[i].cloud_time_ms;
  const long double payload = split == 0 ? p.input_size_mb : p.units[split - 1].output_size_mb;
  return edge / n.cpu_availability + n.latency_ms + 1000.0L * payload / n.bandwidth_mbps + cloud;
}

struct BruteForceResult {
  std::size_t split = 0;
  long double total = 0;
};

// Exhaustive argmin; among equal totals the larger split wins.
inline BruteForceResult brute_force_split(const DnnProfile& p, const NetworkConditions& n) {
  BruteForceResult best{0, brute_force_total(p, 0, n)};
  for (std::size_t s = 1; s <= p.units.size(); ++s) {
    const auto t = brute_force_total(p, s, n);
    if (t <= best.total) best = {s, t};
  }
  return best;
}

// Closed-form downtime compositions, in microseconds.
inline std::int64_t closed_form_downtime_us(Strategy s, const TimingParams& t) {
  switch (s) {
    case Strategy::pause_resume: return t.t_update.count();
    case Strategy::dyn_A_case1:
    case Strategy::dyn_A_case2: return t.t_switch.count();
    case Strategy::dyn_B_case1: return t.t_initialisation.count() + t.t_switch.count();
    case Strategy::dyn_B_case2: return t.t_exec.count() + t.t_switch.count();
  }
  return -1;
}

// Drops during a full outage of `window_s` seconds starting on an empty
// queue: every arrival in the window but the Q that stay buffered.
inline std::int64_t closed_form_drops(double fps, double window_s, std::size_t q) {
  const auto arrivals = static_cast<std::int64_t>(std::ceil(fps * window_s - 1e-9));
  return std::max<std::int64_t>(0, arrivals - static_cast<std::int64_t>(q));
}

inline ExperimentConfig step_config(Strategy strategy, double fps, const std::filesystem::path& profile = vgg_profile()) {
  ExperimentConfig c;
  c.profile_path = profile;
  c.profile = load_sequential_profile(profile, ProfileFormat::layer_list);
  c.strategy = strategy;
  c.fps = fps;
  NetworkConditions a;
  NetworkConditions b = a;
  b.bandwidth_mbps = 5.0;
  c.trace.points = {{Micros{0}, a}, {Micros{10'000'000}, b}};
  return c;
}

inline TimingParams random_timing(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> us(0, 10'000'000);
  TimingParams t;
  t.t_update = Micros{us(rng)};
  t.t_switch = Micros{us(rng) / 1000};
  t.t_initialisation = Micros{us(rng)};
  t.t_exec = Micros{us(rng)};
  return t;
}

}  // namespace nkfg::test
