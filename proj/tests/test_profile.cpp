#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "nkfg/error.hpp"
#include "nkfg/profile.hpp"
#include "support.hpp"

namespace nkfg {
namespace {

using test::TempDir;

LayerGraph graph_of(std::vector<double> times, std::vector<std::pair<std::size_t, std::size_t>> edges) {
  LayerGraph g;
  g.name = "g";
  g.input_size_mb = 1.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    g.nodes.push_back({i, "L" + std::to_string(i + 1), times[i], times[i], 0.1 * static_cast<double>(i + 1)});
  }
  g.edges = std::move(edges);
  return g;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

TEST(LayerList, RoundTripsTwoUnitProfile) {
  TempDir dir("profile");
  const auto p = test::make_profile({4, 6}, {1, 2}, 10, {2, 1}, "two");
  write_layer_list(p, dir / "p.jsonl");
  const auto back = load_layer_list(dir / "p.jsonl");
  EXPECT_EQ(back, p);
  EXPECT_EQ(back.size(), 2u);
}

TEST(LayerList, EmptyUnitsIsAValidationError) {
  TempDir dir("profile");
  write_text(dir / "p.jsonl", R"({"record":"header","name":"e","input_size_mb":1})" "\n");
  EXPECT_THROW(load_layer_list(dir / "p.jsonl"), ValidationError);
}

TEST(LayerList, MalformedRecordNamesTheLine) {
  TempDir dir("profile");
  write_text(dir / "p.jsonl",
             R"({"record":"header","name":"e","input_size_mb":1})" "\n"
             R"({"record":"layer","id":0,"label":"a","edge_time_ms":1,"cloud_time_ms":1,"output_size_mb":0})" "\n"
             "{not json\n");
  try {
    load_layer_list(dir / "p.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(LayerList, NonPositiveTimeNamesTheUnit) {
  TempDir dir("profile");
  write_text(dir / "p.jsonl",
             R"({"record":"header","name":"e","input_size_mb":1})" "\n"
             R"({"record":"layer","id":0,"label":"bad","edge_time_ms":0,"cloud_time_ms":1,"output_size_mb":0})" "\n");
  try {
    load_layer_list(dir / "p.jsonl");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos) << e.what();
  }
}

TEST(LayerGraph, ParallelBranchesHaveOneSourceAndOneSink) {
  // L1 -> {L2, L3} -> L4
  const auto g = graph_of({1, 1, 1, 1}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  EXPECT_NO_THROW(validate(g));
  std::vector<int> in(4, 0), out(4, 0);
  for (auto [u, w] : g.edges) {
    ++out[u];
    ++in[w];
  }
  int sources = 0, sinks = 0;
  for (int i = 0; i < 4; ++i) {
    sources += in[i] == 0;
    sinks += out[i] == 0;
  }
  EXPECT_EQ(sources, 1);
  EXPECT_EQ(sinks, 1);
}

TEST(LayerGraph, RejectsTwoSinksAndBackEdges) {
  EXPECT_THROW(validate(graph_of({1, 1, 1}, {{0, 1}, {0, 2}})), ValidationError);
  EXPECT_THROW(validate(graph_of({1, 1, 1}, {{0, 1}, {1, 2}, {2, 1}})), ValidationError);
  EXPECT_THROW(validate(graph_of({1, 1, 1, 1}, {{0, 1}, {1, 2}})), ValidationError);
}

TEST(LayerGraph, RoundTripsThroughFile) {
  TempDir dir("graph");
  const auto g = graph_of({1, 2, 3, 4}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  write_layer_graph(g, dir / "g.jsonl");
  const auto back = load_layer_graph(dir / "g.jsonl");
  EXPECT_EQ(back.nodes, g.nodes);
  EXPECT_EQ(std::set(back.edges.begin(), back.edges.end()), std::set(g.edges.begin(), g.edges.end()));
}

TEST(CollapseBlocks, ChainMapsOneToOne) {
  const auto g = graph_of({1, 2, 3}, {{0, 1}, {1, 2}});
  const auto p = collapse_blocks(g);
  ASSERT_EQ(p.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(p.units[i].edge_time_ms, g.nodes[i].edge_time_ms);
    EXPECT_EQ(p.units[i].output_size_mb, g.nodes[i].output_size_mb);
    EXPECT_EQ(p.block_map[i], (LayerRange{i, i}));
  }
}

TEST(CollapseBlocks, DiamondBecomesOneBlock) {
  const auto g = graph_of({1, 1, 1, 1}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  const auto p = collapse_blocks(g);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p.units[0].label, "L1");
  EXPECT_EQ(p.units[1].label, "block(L2,L3)");
  EXPECT_EQ(p.units[2].label, "L4");
  EXPECT_DOUBLE_EQ(p.units[1].edge_time_ms, 2.0);
  EXPECT_DOUBLE_EQ(p.units[1].cloud_time_ms, 2.0);
  EXPECT_EQ(p.block_map[1], (LayerRange{1, 2}));
}

TEST(CollapseBlocks, ResidualSkipIsOneBlock) {
  // x -> a -> b -> add, with the skip x -> add.
  const auto g = graph_of({1, 2, 3, 4, 5}, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {3, 4}});
  const auto p = collapse_blocks(g);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_DOUBLE_EQ(p.units[1].edge_time_ms, 5.0);
  EXPECT_EQ(p.block_map[1], (LayerRange{1, 2}));
}

TEST(CollapseBlocks, CrossedReconvergenceIsRejectedWithNodes) {
  // Branches from L1 reconverge at two distinct nodes (L4 and L5) that each
  // mix both branches: not series-parallel.
  const auto g = graph_of({1, 1, 1, 1, 1, 1}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {1, 4}, {2, 4}, {3, 5}, {4, 5}});
  try {
    collapse_blocks(g);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("L2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("L4"), std::string::npos) << msg;
  }
}

TEST(CollapseBlocks, PreservesTotalsOnBundledGraph) {
  const auto g = load_layer_graph(test::mobilenet_profile());
  const auto p = collapse_blocks(g);
  double edge = 0, cloud = 0;
  for (const auto& n : g.nodes) {
    edge += n.edge_time_ms;
    cloud += n.cloud_time_ms;
  }
  EXPECT_NEAR(total_edge_time(p), edge, 1e-9 * edge);
  EXPECT_NEAR(total_cloud_time(p), cloud, 1e-9 * cloud);
  EXPECT_EQ(p.size(), 35u);
  EXPECT_EQ(p.block_map.front().first, 0u);
  EXPECT_EQ(p.block_map.back().last, g.nodes.size() - 1);
  for (std::size_t i = 1; i < p.block_map.size(); ++i) {
    EXPECT_EQ(p.block_map[i].first, p.block_map[i - 1].last + 1);
  }
}

TEST(CollapseBlocks, IdempotentOnSequentialGraphs) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    const auto p = test::random_profile(rng, 20);
    const auto once = collapse_blocks(to_graph(p));
    EXPECT_EQ(once.units.size(), p.units.size());
    EXPECT_EQ(collapse_blocks(to_graph(once)), once);
  }
}

TEST(BundledProfiles, ShapesMatchTheirDescriptions) {
  const auto vgg = load_sequential_profile(test::vgg_profile(), ProfileFormat::layer_list);
  EXPECT_EQ(vgg.size(), 25u);
  const auto mob = load_sequential_profile(test::mobilenet_profile(), ProfileFormat::layer_graph);
  EXPECT_EQ(mob.size(), 35u);
  EXPECT_NE(vgg.name.find("synthetic"), std::string::npos);
  EXPECT_NE(mob.name.find("synthetic"), std::string::npos);
}

TEST(ScaleCompute, IdentityAndArithmetic) {
  const auto p = test::make_profile({4, 6}, {1, 2}, 10, {2, 1});
  EXPECT_EQ(scale_compute(p, 1.0), p);
  EXPECT_DOUBLE_EQ(scale_compute(p, 0.5).units[0].edge_time_ms, 8.0);
  const auto q = scale_compute(p, 0.25);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_DOUBLE_EQ(q.units[i].edge_time_ms, 4.0 * p.units[i].edge_time_ms);
    EXPECT_EQ(q.units[i].cloud_time_ms, p.units[i].cloud_time_ms);
  }
}

TEST(ScaleCompute, RejectsOutOfRange) {
  const auto p = test::p2();
  EXPECT_THROW(scale_compute(p, 0.0), ValidationError);
  EXPECT_THROW(scale_compute(p, -0.1), ValidationError);
  EXPECT_THROW(scale_compute(p, 1.01), ValidationError);
}

TEST(ScaleCompute, IsMultiplicative) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> frac(0.05, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto p = test::random_profile(rng, 10);
    const double a = frac(rng), b = frac(rng);
    const auto two_step = scale_compute(scale_compute(p, a), b);
    const auto one_step = scale_compute(p, a * b);
    for (std::size_t k = 0; k < p.size(); ++k) {
      EXPECT_NEAR(two_step.units[k].edge_time_ms, one_step.units[k].edge_time_ms,
                  1e-9 * one_step.units[k].edge_time_ms);
    }
  }
}

}  // namespace
}  // namespace nkfg
