#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace nkfg {

// One indivisible piece of compute: a single layer, or a collapsed
// parallel region. Times in ms, sizes in megabits.
struct ComputeUnit {
  std::size_t id = 0;
  std::string label;
  double edge_time_ms = 0.0;
  double cloud_time_ms = 0.0;
  double output_size_mb = 0.0;  // payload if the split is placed after this unit

  friend bool operator==(const ComputeUnit&, const ComputeUnit&) = default;
};

// Inclusive range of original layer ids covered by one unit.
struct LayerRange {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first + 1; }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

struct DnnProfile {
  std::string name;
  double input_size_mb = 0.0;  // payload when everything runs in the cloud
  std::vector<ComputeUnit> units;
  std::vector<LayerRange> block_map;

  std::size_t size() const { return units.size(); }

  friend bool operator==(const DnnProfile&, const DnnProfile&) = default;
};

struct LayerNode {
  std::size_t id = 0;
  std::string label;
  double edge_time_ms = 0.0;
  double cloud_time_ms = 0.0;
  double output_size_mb = 0.0;

  friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

// Layer-level DAG as profiled, before parallel regions are collapsed.
// Node ids are 0..n-1 and every edge points from a lower id to a higher one,
// so id order is a topological order.
struct LayerGraph {
  std::string name;
  double input_size_mb = 0.0;
  std::vector<LayerNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  friend bool operator==(const LayerGraph&, const LayerGraph&) = default;
};

enum class ProfileFormat { layer_list, layer_graph };

ProfileFormat parse_profile_format(const std::string& text);
std::string to_string(ProfileFormat format);

// Throws ValidationError naming the offending unit or range.
void validate(const DnnProfile& profile);
// Throws ValidationError for cycles, dangling edges, multiple sources/sinks.
void validate(const LayerGraph& graph);

std::variant<DnnProfile, LayerGraph> load_profile(const std::filesystem::path& path,
                                                  ProfileFormat format);
DnnProfile load_layer_list(const std::filesystem::path& path);
LayerGraph load_layer_graph(const std::filesystem::path& path);

// Loads either format and returns the sequential view (graphs collapsed).
DnnProfile load_sequential_profile(const std::filesystem::path& path, ProfileFormat format);

void write_layer_list(const DnnProfile& profile, const std::filesystem::path& path);
void write_layer_graph(const LayerGraph& graph, const std::filesystem::path& path);

// Collapses each parallel region between two consecutive articulation
// layers into a single unit. Regions must be series-parallel; anything else
// raises ValidationError listing the irreducible layers.
DnnProfile collapse_blocks(const LayerGraph& graph);

// Chain graph equivalent of a sequential profile.
LayerGraph to_graph(const DnnProfile& profile);

// Edge times are divided by the availability fraction; cloud times unchanged.
DnnProfile scale_compute(const DnnProfile& profile, double cpu_availability);

double total_edge_time(const DnnProfile& profile);
double total_cloud_time(const DnnProfile& profile);

}  // namespace nkfg
