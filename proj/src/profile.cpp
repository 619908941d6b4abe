#include "nkfg/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nkfg/error.hpp"

namespace nkfg {
namespace {

using json = nlohmann::json;

std::string describe(std::size_t id, const std::string& label) {
  std::string s = "layer " + std::to_string(id);
  if (!label.empty()) s += " (" + label + ")";
  return s;
}

void check_times(const std::string& who, double edge, double cloud, double size) {
  if (!std::isfinite(edge) || edge <= 0.0) {
    throw ValidationError(who + ": edge_time_ms must be finite and > 0");
  }
  if (!std::isfinite(cloud) || cloud <= 0.0) {
    throw ValidationError(who + ": cloud_time_ms must be finite and > 0");
  }
  if (!std::isfinite(size) || size < 0.0) {
    throw ValidationError(who + ": output_size_mb must be finite and >= 0");
  }
}

struct Record {
  std::size_t line = 0;
  json body;
};

std::vector<Record> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open profile");
  std::vector<Record> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    const auto first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos || text[first] == '#') continue;
    json body;
    try {
      body = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line) + ": malformed record: " +
                       e.what());
    }
    if (!body.is_object() || !body.contains("record") || !body["record"].is_string()) {
      throw ParseError(path.string() + ":" + std::to_string(line) +
                       ": record must be an object with a string \"record\" field");
    }
    out.push_back({line, std::move(body)});
  }
  return out;
}

template <typename T>
T field(const Record& r, const std::filesystem::path& path, const char* key) {
  const auto it = r.body.find(key);
  if (it == r.body.end()) {
    throw ParseError(path.string() + ":" + std::to_string(r.line) + ": missing field \"" + key +
                     "\"");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(path.string() + ":" + std::to_string(r.line) + ": field \"" + key +
                     "\" has the wrong type");
  }
}

struct Parsed {
  std::string name;
  double input_size_mb = 0.0;
  std::vector<LayerNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

Parsed parse(const std::filesystem::path& path, bool allow_edges) {
  Parsed p;
  bool have_header = false;
  for (const auto& r : read_records(path)) {
    const auto kind = r.body["record"].get<std::string>();
    const auto where = path.string() + ":" + std::to_string(r.line);
    if (kind == "header") {
      if (have_header) throw ParseError(where + ": duplicate header record");
      have_header = true;
      p.name = field<std::string>(r, path, "name");
      p.input_size_mb = field<double>(r, path, "input_size_mb");
    } else if (kind == "layer") {
      LayerNode n;
      const auto id = field<long long>(r, path, "id");
      if (id < 0) throw ParseError(where + ": layer id must be >= 0");
      n.id = static_cast<std::size_t>(id);
      n.label = r.body.value("label", std::string{});
      n.edge_time_ms = field<double>(r, path, "edge_time_ms");
      n.cloud_time_ms = field<double>(r, path, "cloud_time_ms");
      n.output_size_mb = field<double>(r, path, "output_size_mb");
      if (n.id != p.nodes.size()) {
        throw ParseError(where + ": layer ids must be consecutive from 0; expected " +
                         std::to_string(p.nodes.size()) + ", got " + std::to_string(n.id));
      }
      try {
        check_times(describe(n.id, n.label), n.edge_time_ms, n.cloud_time_ms, n.output_size_mb);
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
      p.nodes.push_back(std::move(n));
    } else if (kind == "edge") {
      if (!allow_edges) throw ParseError(where + ": edge record in a layer-list file");
      const auto from = field<long long>(r, path, "from");
      const auto to = field<long long>(r, path, "to");
      if (from < 0 || to < 0) throw ParseError(where + ": edge endpoints must be >= 0");
      p.edges.emplace_back(static_cast<std::size_t>(from), static_cast<std::size_t>(to));
    } else {
      throw ParseError(where + ": unknown record kind \"" + kind + "\"");
    }
  }
  if (!have_header) throw ParseError(path.string() + ": missing header record");
  return p;
}

// Articulation layers: those lying on every source-to-sink path. With ids in
// topological order, v is one iff no edge u->w has u < v < w.
std::vector<std::size_t> spine_of(const LayerGraph& g) {
  const auto n = g.nodes.size();
  std::vector<long> cover(n + 1, 0);
  for (const auto& [u, w] : g.edges) {
    if (w > u + 1) {
      ++cover[u + 1];
      --cover[w];
    }
  }
  std::vector<std::size_t> spine;
  long running = 0;
  for (std::size_t v = 0; v < n; ++v) {
    running += cover[v];
    if (running == 0) spine.push_back(v);
  }
  return spine;
}

// Series/parallel reduction of the region [entry, exit]. Returns the layers
// left over when the region does not reduce to a single entry->exit edge.
std::vector<std::size_t> irreducible_layers(const LayerGraph& g, std::size_t entry,
                                            std::size_t exit) {
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : g.edges) {
    if (e.first >= entry && e.second <= exit) edges.insert(e);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t v = entry + 1; v < exit; ++v) {
      std::vector<std::size_t> in, out;
      for (const auto& [a, b] : edges) {
        if (b == v) in.push_back(a);
        if (a == v) out.push_back(b);
      }
      if (in.size() == 1 && out.size() == 1) {
        edges.erase({in[0], v});
        edges.erase({v, out[0]});
        edges.insert({in[0], out[0]});
        changed = true;
      }
    }
  }
  std::set<std::size_t> left;
  for (const auto& [a, b] : edges) {
    if (a != entry) left.insert(a);
    if (b != exit) left.insert(b);
  }
  return {left.begin(), left.end()};
}

}  // namespace

ProfileFormat parse_profile_format(const std::string& text) {
  if (text == "layer-list") return ProfileFormat::layer_list;
  if (text == "layer-graph") return ProfileFormat::layer_graph;
  throw ConfigError("profile format: expected layer-list or layer-graph, got \"" + text + "\"");
}

std::string to_string(ProfileFormat format) {
  return format == ProfileFormat::layer_list ? "layer-list" : "layer-graph";
}

void validate(const DnnProfile& profile) {
  if (profile.units.empty()) throw ValidationError(profile.name + ": profile has no units");
  if (!std::isfinite(profile.input_size_mb) || profile.input_size_mb < 0.0) {
    throw ValidationError(profile.name + ": input_size_mb must be finite and >= 0");
  }
  if (profile.block_map.size() != profile.units.size()) {
    throw ValidationError(profile.name + ": block_map must have one range per unit");
  }
  for (std::size_t i = 0; i < profile.units.size(); ++i) {
    const auto& u = profile.units[i];
    const auto who = "unit " + std::to_string(i) + (u.label.empty() ? "" : " (" + u.label + ")");
    if (u.id != i) throw ValidationError(who + ": id must equal its position");
    check_times(who, u.edge_time_ms, u.cloud_time_ms, u.output_size_mb);
    const auto& r = profile.block_map[i];
    if (r.first > r.last) throw ValidationError(who + ": inverted layer range");
    if (i == 0 ? r.first != 0 : r.first != profile.block_map[i - 1].last + 1) {
      throw ValidationError(who + ": layer ranges must be contiguous and ordered");
    }
  }
}

void validate(const LayerGraph& graph) {
  const auto n = graph.nodes.size();
  if (n == 0) throw ValidationError(graph.name + ": graph has no layers");
  if (!std::isfinite(graph.input_size_mb) || graph.input_size_mb < 0.0) {
    throw ValidationError(graph.name + ": input_size_mb must be finite and >= 0");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = graph.nodes[i];
    if (v.id != i) throw ValidationError(describe(v.id, v.label) + ": ids must be 0..n-1 in order");
    check_times(describe(v.id, v.label), v.edge_time_ms, v.cloud_time_ms, v.output_size_mb);
  }
  std::vector<std::size_t> indeg(n, 0), outdeg(n, 0);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [u, w] : graph.edges) {
    const auto e = "edge " + std::to_string(u) + "->" + std::to_string(w);
    if (u >= n || w >= n) throw ValidationError(e + ": endpoint is not a layer");
    if (u >= w) throw ValidationError(e + ": edges must point to a higher layer id (cycle or back edge)");
    if (!seen.insert({u, w}).second) throw ValidationError(e + ": duplicate edge");
    ++outdeg[u];
    ++indeg[w];
  }
  std::vector<std::size_t> sources, sinks;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) sources.push_back(i);
    if (outdeg[i] == 0) sinks.push_back(i);
  }
  auto list = [&](const std::vector<std::size_t>& ids) {
    std::string s;
    for (auto id : ids) s += (s.empty() ? "" : ", ") + describe(id, graph.nodes[id].label);
    return s;
  };
  if (sources.size() != 1) {
    throw ValidationError(graph.name + ": graph must have exactly one source; found " + list(sources));
  }
  if (sinks.size() != 1) {
    throw ValidationError(graph.name + ": graph must have exactly one sink; found " + list(sinks));
  }
}

DnnProfile load_layer_list(const std::filesystem::path& path) {
  auto p = parse(path, false);
  DnnProfile profile;
  profile.name = std::move(p.name);
  profile.input_size_mb = p.input_size_mb;
  for (auto& n : p.nodes) {
    profile.block_map.push_back({n.id, n.id});
    profile.units.push_back({n.id, std::move(n.label), n.edge_time_ms, n.cloud_time_ms,
                             n.output_size_mb});
  }
  validate(profile);
  return profile;
}

LayerGraph load_layer_graph(const std::filesystem::path& path) {
  auto p = parse(path, true);
  LayerGraph g{std::move(p.name), p.input_size_mb, std::move(p.nodes), std::move(p.edges)};
  validate(g);
  return g;
}

std::variant<DnnProfile, LayerGraph> load_profile(const std::filesystem::path& path,
                                                  ProfileFormat format) {
  if (format == ProfileFormat::layer_list) return load_layer_list(path);
  return load_layer_graph(path);
}

DnnProfile load_sequential_profile(const std::filesystem::path& path, ProfileFormat format) {
  if (format == ProfileFormat::layer_list) return load_layer_list(path);
  return collapse_blocks(load_layer_graph(path));
}

void write_layer_list(const DnnProfile& profile, const std::filesystem::path& path) {
  validate(profile);
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write profile");
  out << json{{"record", "header"}, {"name", profile.name}, {"input_size_mb", profile.input_size_mb}}
             .dump()
      << '\n';
  for (const auto& u : profile.units) {
    out << json{{"record", "layer"},
                {"id", u.id},
                {"label", u.label},
                {"edge_time_ms", u.edge_time_ms},
                {"cloud_time_ms", u.cloud_time_ms},
                {"output_size_mb", u.output_size_mb}}
               .dump()
        << '\n';
  }
}

void write_layer_graph(const LayerGraph& graph, const std::filesystem::path& path) {
  validate(graph);
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write profile");
  out << json{{"record", "header"}, {"name", graph.name}, {"input_size_mb", graph.input_size_mb}}
             .dump()
      << '\n';
  for (const auto& v : graph.nodes) {
    out << json{{"record", "layer"},
                {"id", v.id},
                {"label", v.label},
                {"edge_time_ms", v.edge_time_ms},
                {"cloud_time_ms", v.cloud_time_ms},
                {"output_size_mb", v.output_size_mb}}
               .dump()
        << '\n';
  }
  for (const auto& [u, w] : graph.edges) {
    out << json{{"record", "edge"}, {"from", u}, {"to", w}}.dump() << '\n';
  }
}

DnnProfile collapse_blocks(const LayerGraph& graph) {
  validate(graph);
  const auto spine = spine_of(graph);

  DnnProfile profile;
  profile.name = graph.name;
  profile.input_size_mb = graph.input_size_mb;
  auto emit = [&](std::string label, double edge, double cloud, double size, LayerRange range) {
    profile.units.push_back({profile.units.size(), std::move(label), edge, cloud, size});
    profile.block_map.push_back(range);
  };

  for (std::size_t i = 0; i < spine.size(); ++i) {
    const auto& v = graph.nodes[spine[i]];
    emit(v.label, v.edge_time_ms, v.cloud_time_ms, v.output_size_mb, {v.id, v.id});
    if (i + 1 == spine.size() || spine[i + 1] == spine[i] + 1) continue;

    const auto entry = spine[i];
    const auto exit = spine[i + 1];
    if (auto bad = irreducible_layers(graph, entry, exit); !bad.empty()) {
      std::string names;
      for (auto id : bad) names += (names.empty() ? "" : ", ") + describe(id, graph.nodes[id].label);
      throw ValidationError(graph.name + ": parallel region between " +
                            describe(entry, graph.nodes[entry].label) + " and " +
                            describe(exit, graph.nodes[exit].label) +
                            " is not single-entry/single-exit; irreducible layers: " + names);
    }
    double edge = 0.0, cloud = 0.0;
    std::string label = "block(";
    for (auto id = entry + 1; id < exit; ++id) {
      edge += graph.nodes[id].edge_time_ms;
      cloud += graph.nodes[id].cloud_time_ms;
      label += (id == entry + 1 ? "" : ",") + graph.nodes[id].label;
    }
    label += ")";
    // Splitting after the block ships every tensor the exit layer consumes.
    std::set<std::size_t> feeders;
    for (const auto& [u, w] : graph.edges) {
      if (w == exit) feeders.insert(u);
    }
    double size = 0.0;
    for (auto u : feeders) size += graph.nodes[u].output_size_mb;
    emit(std::move(label), edge, cloud, size, {entry + 1, exit - 1});
  }
  validate(profile);
  return profile;
}

LayerGraph to_graph(const DnnProfile& profile) {
  validate(profile);
  LayerGraph g;
  g.name = profile.name;
  g.input_size_mb = profile.input_size_mb;
  for (const auto& u : profile.units) {
    g.nodes.push_back({u.id, u.label, u.edge_time_ms, u.cloud_time_ms, u.output_size_mb});
    if (u.id > 0) g.edges.emplace_back(u.id - 1, u.id);
  }
  return g;
}

DnnProfile scale_compute(const DnnProfile& profile, double cpu_availability) {
  if (!(cpu_availability > 0.0 && cpu_availability <= 1.0)) {
    throw ValidationError("cpu_availability must lie in (0, 1]; got " +
                          std::to_string(cpu_availability));
  }
  DnnProfile scaled = profile;
  for (auto& u : scaled.units) u.edge_time_ms /= cpu_availability;
  return scaled;
}

double total_edge_time(const DnnProfile& profile) {
  double t = 0.0;
  for (const auto& u : profile.units) t += u.edge_time_ms;
  return t;
}

double total_cloud_time(const DnnProfile& profile) {
  double t = 0.0;
  for (const auto& u : profile.units) t += u.cloud_time_ms;
  return t;
}

}  // namespace nkfg
