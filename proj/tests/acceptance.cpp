// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "nkfg/config.hpp"
#include "nkfg/live/harness.hpp"
#include "nkfg/live/shaper.hpp"
#include "support.hpp"

namespace nkfg {
namespace {

// Pinned tolerances.
constexpr double kPlannerBudgetS = 5.0;
constexpr double kDowntimeBudgetS = 10.0;
constexpr double kLiveBudgetS = 15.0 * 60.0;
constexpr double kPauseResumeTolerance = 0.05;
constexpr Micros kScenarioAFollowUp{200'000};
constexpr std::uint64_t kOneMegabit = 1'000'000;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PartitionPlan plan(std::size_t split) {
  PartitionPlan p;
  p.split = split;
  return p;
}

TransitionReport transition(Strategy s, const TimingParams& t) {
  auto d = make_deployment(s, plan(1));
  VirtualClock clock;
  std::optional<TransitionReport> out;
  begin_transition(d, clock, s, plan(2), t, [&](TransitionReport r) { out = r; });
  clock.run();
  if (!out) throw StateError("transition did not finish");
  return *out;
}

Verdict closed_form_downtimes() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto timing = test::random_timing(rng);
    for (auto s : all_strategies()) {
      if (transition(s, timing).t_downtime.count() != test::closed_form_downtime_us(s, timing)) ++mismatches;
    }
  }
  const double elapsed = seconds_since(t0);
  v.detail << "1000 timings x 5 strategies, " << mismatches << " mismatches, " << elapsed << " s";
  v.require(mismatches == 0, "exact equality");
  v.require(elapsed < kDowntimeBudgetS, "runtime");
  return v;
}

Verdict measured_downtimes() {
  Verdict v;
  const TimingParams t;
  const std::pair<Strategy, const char*> expected[] = {{Strategy::pause_resume, "6000.000"},
                                                       {Strategy::dyn_A_case1, "0.980"},
                                                       {Strategy::dyn_A_case2, "0.980"},
                                                       {Strategy::dyn_B_case1, "1900.980"},
                                                       {Strategy::dyn_B_case2, "600.980"}};
  for (const auto& [s, ms] : expected) {
    const auto got = format_ms(run_experiment(test::step_config(s, 10.0)).transitions.at(0).t_downtime);
    v.detail << to_string(s) << "=" << got << "ms ";
    v.require(got == ms, to_string(s));
  }
  return v;
}

Verdict memory_table() {
  Verdict v;
  struct Row {
    Strategy s;
    const char* total;
    bool transient;
  };
  for (const auto& row : {Row{Strategy::pause_resume, "763.1", false}, Row{Strategy::dyn_A_case1, "1526.2", false},
                          Row{Strategy::dyn_A_case2, "763.1", false}, Row{Strategy::dyn_B_case1, "1526.2", true},
                          Row{Strategy::dyn_B_case2, "763.1", false}}) {
    const auto m = run_experiment(test::step_config(row.s, 10.0)).transitions.at(0).memory;
    const auto total = DeciMB::from_mb(m.total_mb).str();
    v.detail << to_string(row.s) << "=" << total << (m.transient ? "(transient) " : " ");
    v.require(total == row.total && m.transient == row.transient, to_string(row.s));
  }
  return v;
}

Verdict planner_oracle() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4);
  int disagreements = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = test::random_profile(rng);
    const auto n = test::random_conditions(rng);
    if (optimal_split(p, n).split != test::brute_force_split(p, n).split) ++disagreements;
  }
  const double elapsed = seconds_since(t0);
  v.detail << "1000 random cases, " << disagreements << " disagreements, " << elapsed << " s";
  v.require(disagreements == 0, "agreement");
  v.require(elapsed < kPlannerBudgetS, "runtime");
  return v;
}

Verdict bandwidth_shift() {
  Verdict v;
  const auto fast = test::net(20.0, 20.0);
  const auto slow = test::net(5.0, 20.0);
  const auto vgg = load_sequential_profile(test::vgg_profile(), ProfileFormat::layer_list);
  const auto mob = load_sequential_profile(test::mobilenet_profile(), ProfileFormat::layer_graph);
  const auto v20 = optimal_split(vgg, fast).split, v5 = optimal_split(vgg, slow).split;
  const auto m20 = optimal_split(mob, fast).split, m5 = optimal_split(mob, slow).split;
  v.detail << "vgg19_like " << v20 << "->" << v5 << ", mobilenetv2_like " << m20 << "->" << m5;
  v.require(v5 > v20, "vgg19_like moves to a later split");
  v.require(m5 != m20, "mobilenetv2_like changes split");
  return v;
}

Verdict frame_drops() {
  Verdict v;
  for (double fps : {5.0, 10.0, 15.0, 20.0}) {
    const auto drops = run_experiment(test::step_config(Strategy::pause_resume, fps)).transitions.at(0).frames_dropped;
    const auto expected = static_cast<std::uint64_t>(std::ceil(fps * 6.0)) - 1;
    v.detail << fps << "fps=" << drops << " ";
    v.require(drops == expected, "drops at " + std::to_string(fps));
  }
  for (auto s : all_strategies()) {
    std::uint64_t prev = 0;
    for (double fps = 1.0; fps <= 30.0; fps += 1.0) {
      const auto d = run_experiment(test::step_config(s, fps)).transitions.at(0).frames_dropped;
      v.require(d >= prev, to_string(s) + " monotone");
      prev = d;
    }
  }
  v.detail << "monotone for all strategies over 1..30 fps";
  return v;
}

Verdict constancy() {
  Verdict v;
  auto config = load_config(test::source_dir() / "configs" / "sweep_cpu_mem.json");
  auto grid = *config.grid;
  grid.strategies = {Strategy::pause_resume};
  const auto rows = sweep(config, grid, 4);
  std::optional<double> first;
  int feasible = 0, infeasible = 0;
  for (const auto& r : rows) {
    if (r.mem_pct <= 10.0) {
      ++infeasible;
      v.require(r.infeasible, "mem 10% infeasible");
      continue;
    }
    ++feasible;
    v.require(!r.infeasible && r.downtime_ms.has_value(), "feasible cell repartitions");
    if (!r.downtime_ms) continue;
    if (!first) first = r.downtime_ms;
    v.require(*r.downtime_ms == *first, "constant downtime");
  }
  v.detail << feasible << " feasible cells at " << first.value_or(-1) << " ms, " << infeasible << " infeasible";
  return v;
}

Verdict determinism() {
  Verdict v;
  auto c = test::step_config(Strategy::dyn_B_case1, 15.0);
  c.service_jitter = 0.2;
  c.seed = 99;
  const auto a = run_experiment(c), b = run_experiment(c);
  v.require(a.log.to_jsonl() == b.log.to_jsonl(), "event log");
  v.require(summary_csv(summarize(a.log)) == summary_csv(summarize(b.log)), "summary csv");
  auto sweep_config = load_config(test::source_dir() / "configs" / "sweep_fps.json");
  v.require(sweep_csv(sweep(sweep_config, *sweep_config.grid, 1)) ==
                sweep_csv(sweep(sweep_config, *sweep_config.grid, 8)),
            "sweep csv");
  v.detail << a.log.events.size() << " events, summary and sweep csv byte-identical";
  return v;
}

std::uint64_t completions(const MetricsLog& log, Micros from, Micros to) {
  std::uint64_t n = 0;
  for (const auto& e : log.events) n += e.kind == EventKind::frame_complete && e.t >= from && e.t < to;
  return n;
}

Verdict live_ordering() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  auto config = load_config(test::source_dir() / "configs" / "live_ordering.json");
  config.live.executable = test::cli_path();
  const int trials = std::max(10, config.live.trials);
  const auto result = live::run_ordering_trials(config, all_strategies(), trials);
  const auto& med = result.median_ms;
  for (auto s : all_strategies()) v.detail << to_string(s) << "=" << med.at(s) << "ms ";
  v.require(med.at(Strategy::dyn_A_case1) < med.at(Strategy::dyn_B_case2) &&
                med.at(Strategy::dyn_A_case2) < med.at(Strategy::dyn_B_case2),
            "A < B2");
  v.require(med.at(Strategy::dyn_B_case2) < med.at(Strategy::dyn_B_case1), "B2 < B1");
  v.require(med.at(Strategy::dyn_B_case1) < med.at(Strategy::pause_resume), "B1 < pause_resume");
  v.require(std::abs(med.at(Strategy::pause_resume) - 6000.0) <= 6000.0 * kPauseResumeTolerance,
            "pause_resume within 5% of 6000 ms");

  for (const auto& t : result.trials.at(Strategy::pause_resume)) {
    v.require(t.admissions == 0 && t.report.frames_degraded == 0, "pause_resume completes 0");
  }
  for (auto s : {Strategy::dyn_B_case1, Strategy::dyn_B_case2}) {
    for (const auto& t : result.trials.at(s)) v.require(t.report.frames_degraded >= 1, to_string(s) + " completes >= 1");
  }
  // No frame can finish inside a switch window of about 1 ms. Frames must
  // keep flowing right after it.
  for (auto s : {Strategy::dyn_A_case1, Strategy::dyn_A_case2}) {
    const auto summary = summarize(result.logs.at(s));
    for (const auto& t : summary.transitions) {
      v.require(t.drops == 0, to_string(s) + " drops nothing");
      v.require(completions(result.logs.at(s), t.end, t.end + kScenarioAFollowUp) >= 1,
                to_string(s) + " completes right after the switch");
    }
  }
  const double elapsed = seconds_since(t0);
  v.detail << "(" << trials << " trials each, Scenario A window completion not applicable, follow-up flow checked; "
           << elapsed << " s)";
  v.require(elapsed < kLiveBudgetS, "runtime");
  return v;
}

Verdict shaper_conformance() {
  Verdict v;
  live::ShaperConfig one;
  one.rate_mbps = 1.0;
  live::TokenBucket bucket(one, Micros{0});
  std::uint64_t sent = 0;
  Micros last{0};
  while (sent < kOneMegabit) {
    const auto n = std::min(bucket.chunk_bits(), kOneMegabit - sent);
    last = bucket.reserve(n, Micros{0});
    sent += n;
  }
  v.detail << "bucket " << to_ms(last) << " ms";
  v.require(last >= Micros{1'000'000}, "bucket duration");

  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    v.require(false, "socketpair");
    return v;
  }
  Micros socket_ms{0};
  std::vector<live::Grant> grants;
  {
    live::ShapedSender sender(fds[0], one);
    std::thread reader([&] {
      std::vector<std::uint8_t> buf(65536);
      std::size_t got = 0;
      while (got < kOneMegabit / 8) {
        const auto r = ::read(fds[1], buf.data(), buf.size());
        if (r <= 0) break;
        got += static_cast<std::size_t>(r);
      }
    });
    const auto start = live::mono_now();
    sender.send(std::vector<std::uint8_t>(kOneMegabit / 8, 0));
    sender.flush();
    reader.join();
    socket_ms = live::mono_now() - start;
    grants = sender.grants();
  }
  ::close(fds[0]);
  ::close(fds[1]);
  v.detail << ", socket " << to_ms(socket_ms) << " ms";
  v.require(socket_ms >= Micros{1'000'000}, "socket duration");

  std::mt19937_64 rng(10);
  std::uint64_t violations = 0;
  for (int run = 0; run < 50; ++run) {
    live::ShaperConfig c;
    c.rate_mbps = std::uniform_real_distribution<double>(0.5, 50.0)(rng);
    c.burst_mb = std::uniform_real_distribution<double>(0.001, 0.5)(rng);
    live::TokenBucket b(c, Micros{0}, run % 2 == 1);
    std::vector<live::Grant> g;
    Micros now{0};
    for (int i = 0; i < 300; ++i) {
      now += Micros{static_cast<std::int64_t>(rng() % 40'000)};
      const auto bits = 1 + rng() % b.chunk_bits();
      g.push_back({b.reserve(bits, now), bits});
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
      std::uint64_t sum = 0;
      for (std::size_t j = 0; j <= i; ++j) sum += g[j].at > g[i].at - Micros{1'000'000} ? g[j].bits : 0;
      if (static_cast<double>(sum) > c.rate_mbps * 1e6) ++violations;
    }
  }
  for (std::size_t i = 0; i < grants.size(); ++i) {
    std::uint64_t sum = 0;
    for (std::size_t j = 0; j <= i; ++j) sum += grants[j].at > grants[i].at - Micros{1'000'000} ? grants[j].bits : 0;
    if (sum > kOneMegabit) ++violations;
  }
  v.detail << ", " << violations << " sliding-window violations";
  v.require(violations == 0, "sliding window");
  return v;
}

}  // namespace
}  // namespace nkfg

int main(int argc, char** argv) {
  using namespace nkfg;
  bool skip_live = false;
  for (int i = 1; i < argc; ++i) skip_live |= std::string(argv[i]) == "--skip-live";

  const std::pair<const char*, Verdict (*)()> criteria[] = {
      {"closed-form downtimes", closed_form_downtimes},
      {"measured downtimes", measured_downtimes},
      {"memory table", memory_table},
      {"planner oracle", planner_oracle},
      {"bandwidth shift", bandwidth_shift},
      {"frame-drop model", frame_drops},
      {"sweep constancy", constancy},
      {"determinism", determinism},
      {"live ordering", live_ordering},
      {"shaper conformance", shaper_conformance},
  };
  int failed = 0;
  int n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    if (n == 9 && skip_live) {
      std::cout << "criterion 9 SKIP " << name << ": --skip-live" << std::endl;
      continue;
    }
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "error: " << e.what();
    }
    failed += !v.pass;
    std::cout << "criterion " << n << (v.pass ? " PASS " : " FAIL ") << name << ": " << v.detail.str() << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
