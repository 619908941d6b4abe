#include "nkfg/live/harness.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "nkfg/config.hpp"
#include "nkfg/error.hpp"
#include "nkfg/live/net.hpp"
#include "nkfg/live/roles.hpp"

extern char** environ;

namespace nkfg::live {

using json = nlohmann::json;

namespace {

std::string read_ready_line(int fd, Micros timeout, const std::string& role) {
  const auto deadline = mono_now() + timeout;
  std::string line;
  char c;
  while (true) {
    const auto left = deadline - mono_now();
    if (left.count() <= 0) throw Error(role + ": handshake timeout waiting for READY");
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(left.count() / 1000) + 1) <= 0) continue;
    const auto r = ::read(fd, &c, 1);
    if (r <= 0) throw Error(role + ": exited before becoming ready");
    if (c == '\n') return line;
    line += c;
  }
}

RoleProcess spawn_role(const std::filesystem::path& exe, const std::string& role,
                       const std::vector<std::string>& flags, const std::filesystem::path& config_file) {
  int out[2];
  if (::pipe2(out, O_CLOEXEC) != 0) throw Error(role + ": pipe failed");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out[1], STDOUT_FILENO);

  std::vector<std::string> args{exe.string(), "role", "--name", role};
  args.insert(args.end(), flags.begin(), flags.end());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_store;
  for (char** e = environ; *e; ++e) {
    if (std::string(*e).rfind("NEUKONFIG_CONFIG=", 0) != 0) env_store.emplace_back(*e);
  }
  env_store.push_back("NEUKONFIG_CONFIG=" + config_file.string());
  std::vector<char*> envp;
  for (auto& e : env_store) envp.push_back(e.data());
  envp.push_back(nullptr);

  pid_t pid;
  const int rc = ::posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  ::close(out[1]);
  if (rc != 0) {
    ::close(out[0]);
    throw Error(role + ": cannot start " + exe.string());
  }
  Fd reader(out[0]);
  std::string line;
  try {
    line = read_ready_line(reader.get(), kHandshakeTimeout * 2, role);
  } catch (...) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    throw;
  }
  if (line.rfind("READY ", 0) != 0) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    throw Error(role + ": unexpected handshake line \"" + line + "\"");
  }
  return {role, pid, static_cast<std::uint16_t>(std::stoi(line.substr(6)))};
}

}  // namespace

std::filesystem::path role_executable(const ExperimentConfig& config) {
  if (!config.live.executable.empty()) return config.live.executable;
  return std::filesystem::read_symlink("/proc/self/exe");
}

std::unique_ptr<LiveRoles> start_roles(const ExperimentConfig& config) {
  config.validate();
  std::unique_ptr<LiveRoles> roles(new LiveRoles());
  const auto exe = role_executable(config);
  const auto dir = std::filesystem::temp_directory_path();
  roles->config_file_ = dir / ("nkfg-live-" + std::to_string(::getpid()) + "-" +
                               std::to_string(mono_now().count()) + ".json");
  {
    std::ofstream out(roles->config_file_);
    out << config_to_json(config).dump(2) << '\n';
  }
  auto fps = std::to_string(config.fps);
  auto q = std::to_string(config.queue_capacity);
  auto bytes = std::to_string(config.live.payload_bytes);
  auto& p = roles->procs_;
  p["cloud"] = spawn_role(exe, "cloud", {}, roles->config_file_);
  p["edge"] = spawn_role(exe, "edge", {"--cloud-port", std::to_string(p["cloud"].port), "--queue", q},
                         roles->config_file_);
  p["device"] = spawn_role(exe, "device",
                           {"--edge-port", std::to_string(p["edge"].port), "--fps", fps, "--payload-bytes", bytes},
                           roles->config_file_);
  p["coordinator"] = spawn_role(exe, "coordinator",
                                {"--edge-port", std::to_string(p["edge"].port), "--cloud-port",
                                 std::to_string(p["cloud"].port), "--device-port",
                                 std::to_string(p["device"].port)},
                                roles->config_file_);
  auto fd = connect_loopback(p["coordinator"].port, kHandshakeTimeout, "coordinator");
  write_frame(fd.get(), WireFrame::with_text(FrameKind::data, 0, 0, json{{"hello", "harness"}}.dump()));
  if (!read_frame(fd.get())) throw Error("coordinator: handshake failed");
  roles->link_ = std::make_unique<Link>(std::move(fd));
  auto* self = roles.get();
  self->link_->start([self](WireFrame f) { self->on_message(parse_message(f)); },
                     [self] {
                       std::lock_guard lock(self->mu_);
                       self->closed_ = true;
                       self->cv_.notify_all();
                     });
  return roles;
}

void LiveRoles::on_message(const json& m) {
  std::lock_guard lock(mu_);
  if (m.contains("reply")) replies_[m["reply"].get<std::uint64_t>()] = m;
  else if (m.value("event", "") == "pipeline_dead") dead_ = m;
  cv_.notify_all();
}

json LiveRoles::request(json body, Micros timeout) {
  std::uint64_t id;
  {
    std::lock_guard lock(mu_);
    id = ++next_id_;
  }
  body["id"] = id;
  link_->send_text(FrameKind::data, body.dump());
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, timeout, [&] { return replies_.count(id) || closed_; })) {
    throw Error("coordinator: no reply to " + body.value("op", "request"));
  }
  if (!replies_.count(id)) {
    if (dead_) throw Error("coordinator: pipeline dead (" + dead_->value("role", "?") + " worker lost)");
    throw Error("coordinator: connection closed");
  }
  auto reply = replies_[id];
  replies_.erase(id);
  if (reply.contains("error")) throw Error("coordinator: " + reply["error"].get<std::string>());
  return reply;
}

json LiveRoles::status() { return request({{"op", "status"}}); }

MetricsLog LiveRoles::log() {
  std::istringstream in(request({{"op", "log"}}).at("jsonl").get<std::string>());
  return MetricsLog::from_jsonl(in);
}

void LiveRoles::shutdown() {
  bool open;
  {
    std::lock_guard lock(mu_);
    open = !closed_ && link_;
  }
  if (open) {
    try {
      request({{"op", "shutdown"}}, Micros{5'000'000});
    } catch (const Error&) {
    }
  }
}

void LiveRoles::kill(const std::string& role) {
  auto it = procs_.find(role);
  if (it != procs_.end() && it->second.pid > 0) ::kill(it->second.pid, SIGKILL);
}

std::optional<json> LiveRoles::dead_report() {
  std::lock_guard lock(mu_);
  return dead_;
}

std::optional<int> LiveRoles::wait_coordinator(Micros timeout) {
  if (coordinator_status_) return coordinator_status_;
  auto& c = procs_.at("coordinator");
  const auto deadline = mono_now() + timeout;
  while (mono_now() < deadline) {
    int status = 0;
    if (::waitpid(c.pid, &status, WNOHANG) == c.pid) {
      c.pid = -1;
      coordinator_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
      return coordinator_status_;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return std::nullopt;
}

LiveRoles::~LiveRoles() {
  shutdown();
  if (link_) link_->close();
  const auto deadline = mono_now() + Micros{3'000'000};
  for (auto& [name, p] : procs_) {
    if (p.pid <= 0) continue;
    int status;
    while (::waitpid(p.pid, &status, WNOHANG) == 0) {
      if (mono_now() > deadline) {
        ::kill(p.pid, SIGKILL);
        ::waitpid(p.pid, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    p.pid = -1;
  }
  link_.reset();
  std::error_code ec;
  std::filesystem::remove(config_file_, ec);
}

LiveTrial measure_transition(LiveRoles& roles, const NetworkConditions& next) {
  const auto r = roles.request({{"op", "trigger"},
                                {"bandwidth_mbps", next.bandwidth_mbps},
                                {"latency_ms", next.latency_ms},
                                {"cpu_availability", next.cpu_availability},
                                {"memory_availability", next.memory_availability}});
  LiveTrial t;
  t.raw = r;
  t.repartitioned = r.value("repartition", false);
  if (!t.repartitioned) return t;
  auto& rep = t.report;
  rep.strategy = parse_strategy(r.at("strategy").get<std::string>());
  rep.downtime_kind = r.at("downtime_kind").get<std::string>() == "full_outage" ? DowntimeKind::full_outage
                                                                                : DowntimeKind::degraded;
  rep.t_downtime = Micros{r.at("downtime_us").get<std::int64_t>()};
  rep.window.start = Micros{r.at("start_us").get<std::int64_t>()};
  rep.window.end = rep.window.start + (rep.downtime_kind == DowntimeKind::degraded ? rep.t_downtime : Micros{0});
  rep.frames_dropped = r.at("frames_dropped").get<std::uint64_t>();
  rep.frames_degraded = r.at("frames_degraded").get<std::uint64_t>();
  rep.old_split = r.at("old_split").get<std::size_t>();
  rep.new_split = r.at("new_split").get<std::size_t>();
  rep.from = r.at("from").get<PipelineId>();
  rep.to = r.at("to").get<PipelineId>();
  rep.memory.initial_mb = std::stod(r.at("memory_initial_mb").get<std::string>());
  rep.memory.additional_mb = std::stod(r.at("memory_additional_mb").get<std::string>());
  rep.memory.total_mb = std::stod(r.at("memory_total_mb").get<std::string>());
  rep.memory.transient = r.at("memory_transient").get<bool>();
  t.admissions = r.at("admissions").get<std::uint64_t>();
  return t;
}

ExperimentResult run_live(const ExperimentConfig& config) {
  auto roles = start_roles(config);
  const auto t0 = mono_now();
  ExperimentResult result;
  for (std::size_t i = 1; i < config.trace.points.size(); ++i) {
    const auto& p = config.trace.points[i];
    if (p.at >= config.duration) break;
    const auto wait = t0 + p.at - mono_now();
    if (wait.count() > 0) std::this_thread::sleep_for(wait);
    auto trial = measure_transition(*roles, p.net);
    if (trial.repartitioned) result.transitions.push_back(trial.report);
  }
  const auto wait = t0 + config.duration - mono_now();
  if (wait.count() > 0) std::this_thread::sleep_for(wait);
  result.log = roles->log();
  roles->shutdown();
  return result;
}

OrderingTrials run_ordering_trials(const ExperimentConfig& config, const std::vector<Strategy>& strategies,
                                   int trials) {
  if (config.trace.points.size() < 2) throw ValidationError("ordering trials need a trace with a change");
  const auto a = config.trace.points[0].net;
  const auto b = config.trace.points[1].net;
  OrderingTrials out;
  for (auto s : strategies) {
    auto cfg = config;
    cfg.strategy = s;
    auto roles = start_roles(cfg);
    std::this_thread::sleep_for(cfg.live.settle);
    std::vector<double> ms;
    for (int i = 0; i < trials; ++i) {
      const auto trial = measure_transition(*roles, i % 2 == 0 ? b : a);
      if (!trial.repartitioned) throw StateError("ordering trial did not repartition");
      ms.push_back(to_ms(trial.report.t_downtime));
      out.trials[s].push_back(trial);
      std::this_thread::sleep_for(cfg.live.observe);
    }
    out.logs[s] = roles->log();
    roles->shutdown();
    std::sort(ms.begin(), ms.end());
    const auto n = ms.size();
    out.median_ms[s] = n % 2 ? ms[n / 2] : (ms[n / 2 - 1] + ms[n / 2]) / 2.0;
  }
  return out;
}

}  // namespace nkfg::live
