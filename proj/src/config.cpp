#include "nkfg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "nkfg/error.hpp"

namespace nkfg {

using json = nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so the rest
// can be reported.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  void mark(const std::string& key) { seen_.insert(key); }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(name(key) + ": expected a number");
    return v.get<double>();
  }

  Micros ms(const std::string& key, Micros fallback) {
    if (!has(key)) {
      seen_.insert(key);
      return fallback;
    }
    try {
      return to_micros(number(key, 0.0), name(key));
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError(name(key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool flag(const std::string& key, bool fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(name(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(name(key) + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    seen_.insert(key);
    std::vector<double> out;
    if (!has(key)) return out;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(name(key) + ": expected an array of numbers");
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(name(key) + ": expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key \"" + name(key) + "\"");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Strategy strategy_field(const std::string& text, const std::string& field) {
  try {
    return parse_strategy(text);
  } catch (const ConfigError&) {
    std::string names;
    for (auto s : all_strategies()) names += (names.empty() ? "" : ", ") + to_string(s);
    throw ConfigError(field + ": unknown strategy \"" + text + "\" (expected one of " + names + ")");
  }
}

NetworkTrace parse_trace(const json& v) {
  if (!v.is_array() || v.empty()) throw ConfigError("trace: expected a non-empty array");
  NetworkTrace trace;
  NetworkConditions current;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Fields f(v[i], "trace[" + std::to_string(i) + "]");
    TracePoint p;
    p.at = f.ms("t_ms", Micros{0});
    current.bandwidth_mbps = f.number("bandwidth_mbps", current.bandwidth_mbps);
    current.latency_ms = f.number("latency_ms", current.latency_ms);
    current.cpu_availability = f.number("cpu_availability", current.cpu_availability);
    current.memory_availability = f.number("memory_availability", current.memory_availability);
    f.finish();
    p.net = current;
    trace.points.push_back(p);
  }
  return trace;
}

TimingParams parse_timing(const json& v) {
  Fields f(v, "timing");
  TimingParams t;
  t.t_update = f.ms("t_update_ms", t.t_update);
  t.t_switch = f.ms("t_switch_ms", t.t_switch);
  t.t_initialisation = f.ms("t_initialisation_ms", t.t_initialisation);
  t.t_exec = f.ms("t_exec_ms", t.t_exec);
  t.t_build = f.ms("t_build_ms", t.t_build);
  t.t_standby_update = f.ms("t_standby_update_ms", t.t_standby_update);
  f.finish();
  return t;
}

MemoryModel parse_memory(const json& v) {
  Fields f(v, "memory");
  MemoryModel m;
  m.container_mb = f.number("container_mb", m.container_mb);
  m.in_container_pipeline_mb = f.number("in_container_pipeline_mb", m.in_container_pipeline_mb);
  if (f.has("budget_mb")) m.budget_mb = f.number("budget_mb", 0.0);
  f.mark("budget_mb");
  f.finish();
  return m;
}

SweepGrid parse_grid(const json& v) {
  Fields f(v, "grid");
  SweepGrid g;
  g.cpu_pct = f.numbers("cpu_pct");
  g.mem_pct = f.numbers("mem_pct");
  g.fps = f.numbers("fps");
  if (f.has("strategies")) {
    const auto& s = f.raw("strategies");
    if (!s.is_array()) throw ConfigError("grid.strategies: expected an array of names");
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto field = "grid.strategies[" + std::to_string(i) + "]";
      if (!s[i].is_string()) throw ConfigError(field + ": expected a string");
      g.strategies.push_back(strategy_field(s[i].get<std::string>(), field));
    }
  }
  f.mark("strategies");
  if (f.has("bandwidth_changes")) {
    const auto& b = f.raw("bandwidth_changes");
    if (!b.is_array()) throw ConfigError("grid.bandwidth_changes: expected an array of [from, to] pairs");
    for (const auto& pair : b) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
        throw ConfigError("grid.bandwidth_changes: expected an array of [from, to] pairs");
      }
      g.bandwidth_changes.emplace_back(pair[0].get<double>(), pair[1].get<double>());
    }
  }
  f.mark("bandwidth_changes");
  g.change_at = f.ms("change_at_ms", g.change_at);
  f.finish();
  return g;
}

LiveOptions parse_live(const json& v) {
  Fields f(v, "live");
  LiveOptions l;
  l.payload_bytes = f.count("payload_bytes", l.payload_bytes);
  l.burst_mb = f.number("burst_mb", l.burst_mb);
  l.settle = f.ms("settle_ms", l.settle);
  l.observe = f.ms("observe_ms", l.observe);
  l.trials = static_cast<int>(f.count("trials", static_cast<std::uint64_t>(l.trials)));
  f.finish();
  return l;
}

ExperimentConfig parse_body(const json& doc, const std::filesystem::path& base_dir) {
  Fields f(doc, "");
  ExperimentConfig c;
  if (!f.has("profile")) throw ConfigError("profile: required");
  std::filesystem::path profile = f.text("profile", "");
  c.profile_path = profile.is_absolute() ? profile : base_dir / profile;
  try {
    c.profile_format = parse_profile_format(f.text("profile_format", "layer-list"));
  } catch (const Error& e) {
    throw ConfigError(std::string("profile_format: ") + e.what());
  }
  c.strategy = strategy_field(f.text("strategy", to_string(c.strategy)), "strategy");
  c.fps = f.number("fps", c.fps);
  c.duration = f.ms("duration_ms", c.duration);
  c.queue_capacity = f.count("queue_capacity", c.queue_capacity);
  c.seed = f.count("seed", c.seed);
  c.min_gain = f.number("min_gain", c.min_gain);
  c.monitor_delay = f.ms("monitor_delay_ms", c.monitor_delay);
  c.base_image_cached = f.flag("base_image_cached", c.base_image_cached);
  c.service_jitter = f.number("service_jitter", c.service_jitter);
  if (f.has("timing")) c.timing = parse_timing(f.raw("timing"));
  c.trace = f.has("trace") ? parse_trace(f.raw("trace")) : NetworkTrace{{TracePoint{}}};
  if (f.has("memory")) c.memory = parse_memory(f.raw("memory"));
  if (f.has("grid")) c.grid = parse_grid(f.raw("grid"));
  if (f.has("live")) c.live = parse_live(f.raw("live"));
  for (const char* k : {"timing", "trace", "memory", "grid", "live"}) f.mark(k);
  f.finish();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  if (doc.is_object() && doc.contains("manifest_version")) {
    if (!doc.contains("config")) throw ConfigError("manifest: missing \"config\" snapshot");
    return parse_body(doc.at("config"), base_dir);
  }
  return parse_body(doc, base_dir);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_config(doc, base);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["profile"] = std::filesystem::absolute(c.profile_path).lexically_normal().string();
  j["profile_format"] = to_string(c.profile_format);
  j["strategy"] = to_string(c.strategy);
  j["fps"] = c.fps;
  j["duration_ms"] = to_ms(c.duration);
  j["queue_capacity"] = c.queue_capacity;
  j["seed"] = c.seed;
  j["min_gain"] = c.min_gain;
  j["monitor_delay_ms"] = to_ms(c.monitor_delay);
  j["base_image_cached"] = c.base_image_cached;
  j["service_jitter"] = c.service_jitter;
  j["timing"] = {{"t_update_ms", to_ms(c.timing.t_update)},
                 {"t_switch_ms", to_ms(c.timing.t_switch)},
                 {"t_initialisation_ms", to_ms(c.timing.t_initialisation)},
                 {"t_exec_ms", to_ms(c.timing.t_exec)},
                 {"t_build_ms", to_ms(c.timing.t_build)},
                 {"t_standby_update_ms", to_ms(c.timing.t_standby_update)}};
  json trace = json::array();
  for (const auto& p : c.trace.points) {
    trace.push_back({{"t_ms", to_ms(p.at)},
                     {"bandwidth_mbps", p.net.bandwidth_mbps},
                     {"latency_ms", p.net.latency_ms},
                     {"cpu_availability", p.net.cpu_availability},
                     {"memory_availability", p.net.memory_availability}});
  }
  j["trace"] = trace;
  j["memory"] = {{"container_mb", c.memory.container_mb},
                 {"in_container_pipeline_mb", c.memory.in_container_pipeline_mb}};
  if (c.memory.budget_mb) j["memory"]["budget_mb"] = *c.memory.budget_mb;
  if (c.grid) {
    json g;
    g["cpu_pct"] = c.grid->cpu_pct;
    g["mem_pct"] = c.grid->mem_pct;
    g["fps"] = c.grid->fps;
    json names = json::array();
    for (auto s : c.grid->strategies) names.push_back(to_string(s));
    g["strategies"] = names;
    json changes = json::array();
    for (const auto& [a, b] : c.grid->bandwidth_changes) changes.push_back({a, b});
    g["bandwidth_changes"] = changes;
    g["change_at_ms"] = to_ms(c.grid->change_at);
    j["grid"] = g;
  }
  j["live"] = {{"payload_bytes", c.live.payload_bytes},
               {"burst_mb", c.live.burst_mb},
               {"settle_ms", to_ms(c.live.settle)},
               {"observe_ms", to_ms(c.live.observe)},
               {"trials", c.live.trials}};
  return j;
}

}  // namespace nkfg
