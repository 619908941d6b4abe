#include "nkfg/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "nkfg/config.hpp"
#include "nkfg/error.hpp"
#include "nkfg/live/harness.hpp"
#include "nkfg/live/roles.hpp"
#include "nkfg/sim.hpp"
#include "nkfg/version.hpp"

namespace nkfg {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Mismatch : Error {
  using Error::Error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ExperimentConfig load_checked(const std::string& path, std::optional<std::uint64_t> seed) {
  if (path.empty()) throw ConfigError("--config is required (or set NEUKONFIG_CONFIG)");
  auto config = load_config(path);
  if (seed) config.seed = *seed;
  try {
    config.profile = config.load();
  } catch (const Error& e) {
    throw ConfigError(std::string("profile: ") + e.what());
  }
  return config;
}

json manifest(const ExperimentConfig& config, const std::string& mode, const json& outputs,
              const std::string& started, const std::string& finished) {
  auto snapshot = config_to_json(config);
  return {{"manifest_version", 1},
          {"artifact_version", kVersion},
          {"seed", config.seed},
          {"mode", mode},
          {"config", snapshot},
          {"outputs", outputs},
          {"started_at", started},
          {"finished_at", finished}};
}

// The snapshot records only the profile path, never the loaded profile.
ExperimentConfig without_profile(ExperimentConfig c) {
  c.profile.reset();
  return c;
}

int cmd_plan(const std::string& profile_path, const std::string& format, const NetworkConditions& net,
             bool csv) {
  DnnProfile profile;
  try {
    validate(net);
    profile = load_sequential_profile(profile_path, parse_profile_format(format));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const auto table = latency_table(profile, net);
  const auto best = optimal_split(profile, net);
  if (csv) {
    std::cout << "split,t_edge_ms,t_transfer_ms,t_cloud_ms,t_total_ms,payload_mb,chosen\n";
    for (std::size_t s = 0; s < table.size(); ++s) {
      const auto& b = table[s];
      std::cout << s << ',' << fixed(b.t_edge) << ',' << fixed(b.t_transfer) << ',' << fixed(b.t_cloud) << ','
                << fixed(b.t_total) << ',' << fixed(payload_mb(profile, s), 4) << ','
                << (s == best.split ? "true" : "false") << '\n';
    }
    return kExitOk;
  }
  std::cout << "profile: " << profile.name << " (" << profile.units.size() << " units)\n"
            << "conditions: bandwidth " << net.bandwidth_mbps << " Mbps, latency " << net.latency_ms
            << " ms, cpu " << net.cpu_availability << "\n\n";
  std::printf("%5s %10s %13s %11s %11s %11s\n", "split", "t_edge_ms", "t_transfer_ms", "t_cloud_ms", "t_total_ms",
              "payload_mb");
  std::fflush(stdout);
  for (std::size_t s = 0; s < table.size(); ++s) {
    const auto& b = table[s];
    std::printf("%5zu %10.3f %13.3f %11.3f %11.3f %11.4f%s\n", s, b.t_edge, b.t_transfer, b.t_cloud, b.t_total,
                payload_mb(profile, s), s == best.split ? "  <- chosen" : "");
  }
  std::printf("\nchosen split: %zu (t_total %.3f ms)\n", best.split, best.breakdown.t_total);
  return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& mode, const fs::path& out,
            std::optional<std::uint64_t> seed) {
  const auto config = load_checked(config_path, seed);
  const auto started = utc_now();
  const auto result = mode == "live" ? live::run_live(config) : run_experiment(config);
  const auto summary = summarize(result.log);
  fs::create_directories(out);
  write_file(out / "events.jsonl", result.log.to_jsonl());
  write_file(out / "summary.csv", summary_csv(summary));
  write_file(out / "manifest.json",
             manifest(without_profile(config), mode, {{"events", "events.jsonl"}, {"summary", "summary.csv"}},
                      started, utc_now())
                     .dump(2) +
                 "\n");
  std::cout << "frames: " << summary.arrivals << " arrived, " << summary.completions << " completed, "
            << summary.drops << " dropped\n";
  for (const auto& t : summary.transitions) {
    std::cout << "transition " << t.index << ": " << t.strategy << " split " << t.old_split << "->" << t.new_split
              << ", " << to_string(t.kind) << " downtime " << format_ms(t.downtime) << " ms, drops " << t.drops
              << ", degraded " << t.degraded << ", memory " << t.memory_total_mb << " MB"
              << (t.memory_transient ? " (transient)" : "") << '\n';
  }
  std::cout << "wrote " << (out / "events.jsonl").string() << ", " << (out / "summary.csv").string() << ", "
            << (out / "manifest.json").string() << '\n';
  return kExitOk;
}

std::vector<SweepRow> sweep_rows(const ExperimentConfig& config, const std::string& mode, unsigned workers) {
  if (!config.grid) throw ConfigError("grid: required for sweep");
  if (mode == "live") return sweep(config, *config.grid, 1, live::run_live);
  return sweep(config, *config.grid, workers);
}

int cmd_sweep(const std::string& config_path, const std::string& mode, const fs::path& out,
              std::optional<std::uint64_t> seed, unsigned workers) {
  const auto config = load_checked(config_path, seed);
  const auto started = utc_now();
  std::vector<SweepRow> rows;
  try {
    rows = sweep_rows(config, mode, workers);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  const auto csv = sweep_csv(rows);
  fs::create_directories(out);
  write_file(out / "sweep.csv", csv);
  write_file(out / "manifest.json",
             manifest(without_profile(config), mode, {{"sweep", "sweep.csv"}}, started, utc_now()).dump(2) + "\n");
  std::cout << csv;
  std::cout << "wrote " << rows.size() << " rows to " << (out / "sweep.csv").string() << '\n';
  return kExitOk;
}

void expect_same(const std::string& what, const std::string& expected, const std::string& actual) {
  if (expected == actual) return;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < expected.size() && i < actual.size() && expected[i] == actual[i]) {
    if (expected[i] == '\n') ++line;
    ++i;
  }
  throw Mismatch(what + " differs at line " + std::to_string(line));
}

int cmd_verify(const fs::path& out, bool rerun) {
  const auto manifest_path = out / "manifest.json";
  if (!fs::exists(manifest_path)) throw ConfigError("verify: no manifest.json in " + out.string());
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ConfigError(manifest_path.string() + ": " + e.what());
  }
  const auto outputs = m.value("outputs", json::object());
  const auto mode = m.value("mode", "sim");
  std::size_t checks = 0;
  if (outputs.contains("events")) {
    std::ifstream in(out / outputs["events"].get<std::string>());
    if (!in) throw Error("cannot read events log");
    const auto log = MetricsLog::from_jsonl(in);
    const auto recomputed = summary_csv(summarize(log));
    const auto stored = read_file(out / outputs["summary"].get<std::string>());
    expect_same("summary.csv recomputed from events", stored, recomputed);
    ++checks;
  }
  if (rerun) {
    if (mode != "sim") throw ConfigError("verify --rerun: only sim-mode runs reproduce exactly");
    const auto config = parse_config(m, out);
    if (outputs.contains("events")) {
      const auto result = run_experiment(config);
      expect_same("events.jsonl after re-run", read_file(out / outputs["events"].get<std::string>()),
                  result.log.to_jsonl());
      expect_same("summary.csv after re-run", read_file(out / outputs["summary"].get<std::string>()),
                  summary_csv(summarize(result.log)));
      ++checks;
    }
    if (outputs.contains("sweep")) {
      expect_same("sweep.csv after re-run", read_file(out / outputs["sweep"].get<std::string>()),
                  sweep_csv(sweep_rows(config, "sim", 1)));
      ++checks;
    }
  }
  if (checks == 0) throw ConfigError("verify: nothing to check in " + out.string());
  std::cout << "verify: ok (" << checks << " check" << (checks == 1 ? "" : "s") << ")\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Partitioned DNN pipeline reconfiguration: planner, simulator and live harness", "nkfg"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, mode = "sim", out_dir = "out", profile_path, format = "layer-list";
  std::optional<std::uint64_t> seed;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  NetworkConditions net;
  bool csv = false, rerun = false;
  live::RoleArgs role;

  auto* plan = app.add_subcommand("plan", "Print the per-split latency table and the chosen split");
  plan->add_option("--profile", profile_path, "Profile file (JSONL)")->required();
  plan->add_option("--format", format, "layer-list or layer-graph")->capture_default_str();
  plan->add_option("--bandwidth", net.bandwidth_mbps, "Mbps")->capture_default_str();
  plan->add_option("--latency", net.latency_ms, "ms")->capture_default_str();
  plan->add_option("--cpu", net.cpu_availability, "Edge CPU availability in (0, 1]")->capture_default_str();
  plan->add_flag("--csv", csv, "Print CSV instead of a table");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->envname("NEUKONFIG_CONFIG");
    sub->add_option("--mode", mode, "sim or live")->check(CLI::IsMember({"sim", "live"}))->capture_default_str();
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Override the config seed");
  };
  auto* run = app.add_subcommand("run", "Run one experiment");
  add_common(run);
  auto* sw = app.add_subcommand("sweep", "Run the config's CPU x memory x FPS grid");
  add_common(sw);
  sw->add_option("--workers", workers, "Parallel sim cells")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Recompute summaries from the raw log and compare");
  verify->add_option("--out", out_dir, "Run output directory")->capture_default_str();
  verify->add_flag("--rerun", rerun, "Also re-run from the manifest and compare every output");

  auto* role_cmd = app.add_subcommand("role", "Host one live-harness process");
  role_cmd->group("");
  role_cmd->add_option("--name", role.name)->required();
  role_cmd->add_option("--port", role.port);
  role_cmd->add_option("--edge-port", role.edge_port);
  role_cmd->add_option("--cloud-port", role.cloud_port);
  role_cmd->add_option("--device-port", role.device_port);
  role_cmd->add_option("--fps", role.fps);
  role_cmd->add_option("--queue", role.queue_capacity);
  role_cmd->add_option("--payload-bytes", role.payload_bytes);
  role_cmd->add_option("--config", role.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*plan) return cmd_plan(profile_path, format, net, csv);
    if (*run) return cmd_run(config_path, mode, out_dir, seed);
    if (*sw) return cmd_sweep(config_path, mode, out_dir, seed, workers);
    if (*verify) return cmd_verify(out_dir, rerun);
    if (*role_cmd) return live::run_role(role);
  } catch (const ConfigError& e) {
    std::cerr << "nkfg: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Mismatch& e) {
    std::cerr << "nkfg: verify: " << e.what() << '\n';
    return kExitMismatch;
  } catch (const std::exception& e) {
    std::cerr << "nkfg: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace nkfg
