#include <gtest/gtest.h>

#include <fstream>

#include "nkfg/config.hpp"
#include "nkfg/error.hpp"
#include "support.hpp"

namespace nkfg {
namespace {

using nlohmann::json;

json minimal() {
  return {{"profile", test::vgg_profile().string()},
          {"trace", json::array({{{"t_ms", 0}, {"bandwidth_mbps", 20}}})}};
}

std::string error_of(const json& doc) {
  try {
    parse_config(doc, test::source_dir());
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigFiles, EveryBundledConfigLoads) {
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(test::source_dir() / "configs")) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const auto c = load_config(entry.path());
    EXPECT_TRUE(std::filesystem::exists(c.profile_path)) << entry.path();
    EXPECT_NO_THROW(c.load()) << entry.path();
  }
  EXPECT_GE(seen, 6);
}

TEST(ConfigFiles, FieldsAreRead) {
  const auto c = load_config(test::source_dir() / "configs" / "vgg19_dyn_B_case2.json");
  EXPECT_EQ(c.strategy, Strategy::dyn_B_case2);
  EXPECT_EQ(c.duration, Micros{30'000'000});
  ASSERT_EQ(c.trace.points.size(), 2u);
  EXPECT_EQ(c.trace.points[1].at, Micros{10'000'000});
  EXPECT_DOUBLE_EQ(c.trace.points[1].net.bandwidth_mbps, 5.0);
  EXPECT_DOUBLE_EQ(c.trace.points[1].net.latency_ms, 20.0);
  EXPECT_DOUBLE_EQ(c.trace.points[1].net.cpu_availability, 1.0);

  const auto s = load_config(test::source_dir() / "configs" / "sweep_cpu_mem.json");
  ASSERT_TRUE(s.grid);
  EXPECT_EQ(s.grid->mem_pct.size(), 4u);
  EXPECT_EQ(s.grid->strategies.size(), 5u);
  EXPECT_EQ(s.grid->bandwidth_changes.size(), 2u);
}

TEST(Config, DefaultsMatchTheTimingTable) {
  const auto c = parse_config(minimal(), test::source_dir());
  EXPECT_EQ(c.timing, TimingParams{});
  EXPECT_EQ(c.strategy, Strategy::pause_resume);
  EXPECT_EQ(c.queue_capacity, 1u);
  EXPECT_DOUBLE_EQ(c.memory.container_mb, 763.1);
}

TEST(Config, SnapshotRoundTrips) {
  auto doc = minimal();
  doc["strategy"] = "dyn_A_case1";
  doc["fps"] = 12.5;
  doc["queue_capacity"] = 3;
  doc["timing"] = {{"t_update_ms", 5000}, {"t_switch_ms", 1.25}, {"t_build_ms", 100}};
  doc["memory"] = {{"container_mb", 500.5}, {"budget_mb", 2000}};
  doc["trace"].push_back({{"t_ms", 1500}, {"bandwidth_mbps", 7}, {"cpu_availability", 0.5}});
  doc["grid"] = {{"fps", {5, 10}}, {"bandwidth_changes", {{20, 5}}}};
  doc["live"] = {{"trials", 3}, {"payload_bytes", 2000}};
  const auto first = parse_config(doc, test::source_dir());
  const auto snapshot = config_to_json(first);
  const auto second = parse_config(snapshot, "/nonexistent");
  EXPECT_EQ(config_to_json(second), snapshot);
  EXPECT_EQ(second.timing.t_switch, Micros{1250});
  EXPECT_EQ(second.timing.t_build, Micros{100'000});
  EXPECT_EQ(second.memory.budget_mb, 2000.0);
  EXPECT_EQ(second.live.trials, 3);
  EXPECT_EQ(second.trace.points, first.trace.points);
}

TEST(Config, ManifestCarriesItsConfig) {
  json manifest{{"manifest_version", 1}, {"config", config_to_json(parse_config(minimal(), "/"))}};
  EXPECT_NO_THROW(parse_config(manifest, "/"));
  EXPECT_NE(error_of({{"manifest_version", 1}}).find("config"), std::string::npos);
}

TEST(Config, RelativeProfileResolvesAgainstTheConfigDir) {
  test::TempDir dir("config");
  std::filesystem::create_directories(dir / "nested");
  std::filesystem::copy_file(test::vgg_profile(), dir / "nested" / "p.jsonl");
  auto doc = minimal();
  doc["profile"] = "nested/p.jsonl";
  std::ofstream(dir / "c.json") << doc.dump();
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.profile_path, dir / "nested" / "p.jsonl");
}

TEST(Config, ErrorsNameTheField) {
  auto doc = minimal();
  doc["strategy"] = "warp_drive";
  auto msg = error_of(doc);
  EXPECT_NE(msg.find("strategy"), std::string::npos);
  EXPECT_NE(msg.find("warp_drive"), std::string::npos);

  doc = minimal();
  doc["fsp"] = 10;
  EXPECT_NE(error_of(doc).find("fsp"), std::string::npos);

  doc = minimal();
  doc["timing"] = {{"t_swtich_ms", 1}};
  EXPECT_NE(error_of(doc).find("t_swtich_ms"), std::string::npos);

  doc = minimal();
  doc["fps"] = "fast";
  EXPECT_NE(error_of(doc).find("fps"), std::string::npos);

  doc = minimal();
  doc["timing"] = {{"t_switch_ms", 0.0001}};
  EXPECT_NE(error_of(doc).find("t_switch_ms"), std::string::npos);

  doc = minimal();
  doc.erase("profile");
  EXPECT_NE(error_of(doc).find("profile"), std::string::npos);

  doc = minimal();
  doc["profile_format"] = "layer_soup";
  EXPECT_NE(error_of(doc).find("profile_format"), std::string::npos);

  doc = minimal();
  doc["trace"] = json::array({{{"t_ms", 5}, {"bandwidth_mbps", 20}}});
  EXPECT_FALSE(error_of(doc).empty());

  doc = minimal();
  doc["queue_capacity"] = 0;
  EXPECT_FALSE(error_of(doc).empty());

  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

}  // namespace
}  // namespace nkfg
