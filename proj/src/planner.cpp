#include "nkfg/planner.hpp"

#include <cmath>

#include "nkfg/error.hpp"

namespace nkfg {
namespace {

bool fraction(double f) { return f > 0.0 && f <= 1.0; }

LatencyBreakdown assemble(double edge_sum, double cloud_sum, double payload,
                          const NetworkConditions& net) {
  LatencyBreakdown b;
  b.t_edge = edge_sum / net.cpu_availability;
  b.t_transfer = net.latency_ms + 1000.0 * payload / net.bandwidth_mbps;
  b.t_cloud = cloud_sum;
  b.t_total = b.t_edge + b.t_transfer + b.t_cloud;
  return b;
}

}  // namespace

void validate(const NetworkConditions& net) {
  if (!std::isfinite(net.bandwidth_mbps) || net.bandwidth_mbps <= 0.0) {
    throw ValidationError("bandwidth_mbps must be > 0");
  }
  if (!std::isfinite(net.latency_ms) || net.latency_ms < 0.0) {
    throw ValidationError("latency_ms must be >= 0");
  }
  if (!fraction(net.cpu_availability)) throw ValidationError("cpu_availability must lie in (0, 1]");
  if (!fraction(net.memory_availability)) {
    throw ValidationError("memory_availability must lie in (0, 1]");
  }
}

double payload_mb(const DnnProfile& profile, std::size_t split) {
  if (split > profile.size()) {
    throw ValidationError("split " + std::to_string(split) + " out of range [0, " +
                          std::to_string(profile.size()) + "]");
  }
  return split == 0 ? profile.input_size_mb : profile.units[split - 1].output_size_mb;
}

LatencyBreakdown estimate_latency(const DnnProfile& profile, std::size_t split,
                                  const NetworkConditions& net) {
  validate(net);
  const double payload = payload_mb(profile, split);
  double edge = 0.0;
  for (std::size_t i = 0; i < split; ++i) edge += profile.units[i].edge_time_ms;
  // Cloud time accumulates from the last unit backwards, matching the
  // suffix sums in latency_table exactly.
  double cloud = 0.0;
  for (std::size_t i = profile.size(); i > split; --i) cloud += profile.units[i - 1].cloud_time_ms;
  return assemble(edge, cloud, payload, net);
}

std::vector<LatencyBreakdown> latency_table(const DnnProfile& profile,
                                            const NetworkConditions& net) {
  validate(net);
  const auto n = profile.size();
  std::vector<double> cloud_suffix(n + 1, 0.0);
  for (std::size_t s = n; s > 0; --s) {
    cloud_suffix[s - 1] = cloud_suffix[s] + profile.units[s - 1].cloud_time_ms;
  }
  std::vector<LatencyBreakdown> table;
  table.reserve(n + 1);
  double edge_prefix = 0.0;
  for (std::size_t s = 0; s <= n; ++s) {
    if (s > 0) edge_prefix += profile.units[s - 1].edge_time_ms;
    table.push_back(assemble(edge_prefix, cloud_suffix[s], payload_mb(profile, s), net));
  }
  return table;
}

PartitionPlan plan_for_split(const DnnProfile& profile, std::size_t split,
                             const NetworkConditions& net) {
  return {split, estimate_latency(profile, split, net), profile.name, net};
}

PartitionPlan optimal_split(const DnnProfile& profile, const NetworkConditions& net) {
  validate(profile);
  const auto table = latency_table(profile, net);
  std::size_t best = 0;
  for (std::size_t s = 1; s < table.size(); ++s) {
    if (table[s].t_total <= table[best].t_total) best = s;
  }
  return {best, table[best], profile.name, net};
}

RepartitionDecision should_repartition(const PartitionPlan& current, const DnnProfile& profile,
                                       const NetworkConditions& new_net, double min_gain) {
  if (!(min_gain >= 0.0)) throw ValidationError("min_gain must be >= 0");
  auto candidate = optimal_split(profile, new_net);
  if (candidate.split == current.split) return {};
  const double stale = estimate_latency(profile, current.split, new_net).t_total;
  const double gain = (stale - candidate.breakdown.t_total) / stale;
  if (!(candidate.breakdown.t_total < stale) || gain < min_gain) return {};
  return {true, std::move(candidate)};
}

}  // namespace nkfg
