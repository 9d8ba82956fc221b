#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "msvl/topology.hpp"
#include "test_util.hpp"

using namespace msvl;

namespace {

// Union-find component count, independent of the library's BFS.
std::size_t union_find_components(const GraphTopology& g) {
  std::vector<std::size_t> parent(g.node_count);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [a, b] : g.edges) parent[find(a)] = find(b);
  std::set<std::size_t> roots;
  for (std::size_t i = 0; i < g.node_count; ++i) roots.insert(find(i));
  return roots.size();
}

// Largest finite Floyd-Warshall distance.
std::size_t floyd_diameter(const GraphTopology& g) {
  const std::size_t n = g.node_count, inf = 1u << 20;
  std::vector<std::size_t> d(n * n, inf);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0;
  for (auto [a, b] : g.edges) d[a * n + b] = d[b * n + a] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::min(d[i * n + j], d[i * n + k] + d[k * n + j]);
  std::size_t best = 0;
  for (std::size_t v : d)
    if (v < inf) best = std::max(best, v);
  return best;
}

void expect_canonical(const GraphTopology& g) {
  for (auto [a, b] : g.edges) {
    EXPECT_LT(a, b);
    EXPECT_LT(b, g.node_count);
  }
  EXPECT_TRUE(std::is_sorted(g.edges.begin(), g.edges.end()));
  EXPECT_EQ(std::adjacent_find(g.edges.begin(), g.edges.end()), g.edges.end());
}

}  // namespace

TEST(Topology, Ring24) {
  const auto g = build_topology(TopologyKind::ring, 24);
  expect_canonical(g);
  EXPECT_EQ(g.edges.size(), 24u);
  for (auto d : g.degrees()) EXPECT_EQ(d, 2u);
  const auto s = analyze(g);
  EXPECT_EQ(s.component_count(), 1u);
  ASSERT_EQ(s.diameters.size(), 1u);
  EXPECT_EQ(s.diameters[0], 12u);
}

TEST(Topology, Full24) {
  const auto g = build_topology(TopologyKind::full, 24);
  expect_canonical(g);
  EXPECT_EQ(g.edges.size(), 276u);
  for (auto d : g.degrees()) EXPECT_EQ(d, 23u);
  EXPECT_EQ(analyze(g).diameters.at(0), 1u);
}

TEST(Topology, JumperTwoSplitsIntoTwoCycles) {
  const auto g = build_topology(TopologyKind::jumper, 24, 2);
  expect_canonical(g);
  EXPECT_EQ(g.edges.size(), 24u);
  for (auto d : g.degrees()) EXPECT_EQ(d, 2u);
  const auto s = analyze(g);
  EXPECT_EQ(s.component_count(), 2u);
  EXPECT_EQ(s.component_sizes, (std::vector<std::size_t>{12, 12}));
  EXPECT_EQ(union_find_components(g), 2u);
}

TEST(Topology, JumperFiveIsConnected) {
  const auto g = build_topology(TopologyKind::jumper, 24, 5);
  EXPECT_EQ(analyze(g).component_count(), 1u);
  EXPECT_EQ(union_find_components(g), 1u);
}

TEST(Topology, JumperThreeHasThreeEightCycles) {
  const auto s = analyze(build_topology(TopologyKind::jumper, 24, 3));
  EXPECT_EQ(s.component_sizes, (std::vector<std::size_t>{8, 8, 8}));
  EXPECT_EQ(s.diameters, (std::vector<std::size_t>{4, 4, 4}));
}

TEST(Topology, ChordComponentsFollowGcd) {
  for (std::size_t v = 2; v <= 30; ++v)
    for (std::size_t n = 1; n < v; ++n) {
      if ((2 * n) % v == 0) continue;
      const auto g = build_topology(TopologyKind::jumper, v, n);
      expect_canonical(g);
      const auto s = analyze(g);
      const std::size_t k = std::gcd(n, v);
      ASSERT_EQ(s.component_count(), k) << "V=" << v << " N=" << n;
      EXPECT_EQ(union_find_components(g), k);
      EXPECT_EQ(g.edges.size(), v);
      for (auto d : g.degrees()) EXPECT_EQ(d, 2u);
      for (std::size_t size : s.component_sizes) EXPECT_EQ(size, v / k);
      // each component is a cycle of length V/k
      for (std::size_t dia : s.diameters) EXPECT_EQ(dia, v / k / 2);
    }
}

TEST(Topology, HalfStepChordsCollapseToMatching) {
  const auto g = build_topology(TopologyKind::jumper, 24, 12);
  EXPECT_EQ(g.edges.size(), 12u);
  for (auto d : g.degrees()) EXPECT_EQ(d, 1u);
  EXPECT_EQ(analyze(g).component_count(), 12u);
}

TEST(Topology, StepOneEqualsRing) {
  for (std::size_t v : {3, 5, 24})
    EXPECT_EQ(build_topology(TopologyKind::jumper, v, 1).edges, build_topology(TopologyKind::ring, v).edges);
}

TEST(Topology, IncludeRingConnects) {
  for (std::size_t n = 1; n < 24; ++n) {
    const auto g = build_topology(TopologyKind::jumper, 24, n, true);
    expect_canonical(g);
    EXPECT_EQ(analyze(g).component_count(), 1u);
    EXPECT_EQ(union_find_components(g), 1u);
    for (std::size_t i = 0; i < 24; ++i) {
      const Edge e{std::min(i, (i + 1) % 24), std::max(i, (i + 1) % 24)};
      EXPECT_TRUE(std::binary_search(g.edges.begin(), g.edges.end(), e));
    }
  }
}

TEST(Topology, DiametersMatchFloydWarshall) {
  for (std::size_t n = 1; n < 24; ++n)
    for (bool ring : {false, true}) {
      const auto g = build_topology(TopologyKind::jumper, 24, n, ring);
      const auto s = analyze(g);
      EXPECT_EQ(*std::max_element(s.diameters.begin(), s.diameters.end()), floyd_diameter(g));
      std::size_t total = 0;
      for (auto size : s.component_sizes) total += size;
      EXPECT_EQ(total, 24u);
    }
}

TEST(Topology, DegreeHistogram) {
  const auto s = analyze(build_topology(TopologyKind::jumper, 6, 2, true));
  // ring + chords (i, i+2): every node has degree 4
  EXPECT_EQ(s.degree_histogram, (std::map<std::size_t, std::size_t>{{4, 6}}));
}

TEST(Topology, InvalidParametersRejected) {
  EXPECT_THROW(build_topology(TopologyKind::ring, 1), InvalidInput);
  EXPECT_THROW(build_topology(TopologyKind::jumper, 24), InvalidInput);
  EXPECT_THROW(build_topology(TopologyKind::jumper, 24, 24), InvalidInput);
  EXPECT_THROW(build_topology(TopologyKind::jumper, 24, 0), InvalidInput);
  EXPECT_THROW(topology_kind_from_string("star"), InvalidInput);
}

TEST(TopologyJson, RoundtripAndSchema) {
  const auto g = build_topology(TopologyKind::jumper, 24, 2);
  const auto j = topology_to_json(g);
  EXPECT_EQ(j["v"], 24);
  EXPECT_EQ(j["kind"], "jumper");
  EXPECT_EQ(j["step"], 2);
  EXPECT_EQ(j["include_ring"], false);
  EXPECT_EQ(j["edges"].size(), 24u);
  EXPECT_EQ(j["edges"][0], nlohmann::json::array({0, 2}));
  const auto back = topology_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.edges, g.edges);
  EXPECT_EQ(topology_to_json(back).dump(), j.dump());
}

TEST(TopologyJson, InconsistentEdgesRejected) {
  auto j = nlohmann::json::parse(topology_to_json(build_topology(TopologyKind::ring, 5)).dump());
  j["edges"].push_back({0, 2});
  EXPECT_THROW(topology_from_json(j), FormatError);
  j = nlohmann::json::parse(topology_to_json(build_topology(TopologyKind::ring, 5)).dump());
  j["v"] = 1;
  EXPECT_THROW(topology_from_json(j), FormatError);
}

TEST(TopologyJson, StatsReport) {
  const auto g = build_topology(TopologyKind::jumper, 24, 2);
  const auto j = stats_to_json(analyze(g), g);
  EXPECT_EQ(j["edge_count"], 24);
  EXPECT_EQ(j["connected_components"], 2);
  EXPECT_EQ(j["component_sizes"], nlohmann::json::array({12, 12}));
  EXPECT_EQ(j["degree_histogram"]["2"], 24);
}
