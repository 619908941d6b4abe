#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "nkfg/profile.hpp"

namespace nkfg {

struct NetworkConditions {
  double bandwidth_mbps = 20.0;
  double latency_ms = 20.0;  // one-way, charged once per inference
  double cpu_availability = 1.0;
  double memory_availability = 1.0;

  friend bool operator==(const NetworkConditions&, const NetworkConditions&) = default;
};

void validate(const NetworkConditions& net);

struct LatencyBreakdown {
  double t_edge = 0.0;
  double t_transfer = 0.0;
  double t_cloud = 0.0;
  double t_total = 0.0;

  friend bool operator==(const LatencyBreakdown&, const LatencyBreakdown&) = default;
};

// `split` units run on the edge (0 = everything in the cloud, N = everything
// on the edge). The transfer term is charged for every split, N included.
struct PartitionPlan {
  std::size_t split = 0;
  LatencyBreakdown breakdown;
  std::string profile_name;
  NetworkConditions conditions;

  friend bool operator==(const PartitionPlan&, const PartitionPlan&) = default;
};

// Payload in megabits crossing the link for a split.
double payload_mb(const DnnProfile& profile, std::size_t split);

LatencyBreakdown estimate_latency(const DnnProfile& profile, std::size_t split,
                                  const NetworkConditions& net);

// Breakdown for every split 0..N, computed from running prefix sums.
std::vector<LatencyBreakdown> latency_table(const DnnProfile& profile,
                                            const NetworkConditions& net);

// Minimises t_total; ties go to the larger split.
PartitionPlan optimal_split(const DnnProfile& profile, const NetworkConditions& net);

PartitionPlan plan_for_split(const DnnProfile& profile, std::size_t split,
                             const NetworkConditions& net);

struct RepartitionDecision {
  bool repartition = false;
  std::optional<PartitionPlan> plan;  // set iff repartition
};

RepartitionDecision should_repartition(const PartitionPlan& current, const DnnProfile& profile,
                                       const NetworkConditions& new_net, double min_gain = 0.0);

}  // namespace nkfg
