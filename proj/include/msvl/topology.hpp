#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msvl/error.hpp"
#include "msvl/util.hpp"

namespace msvl {

enum class TopologyKind { ring, full, jumper };

inline std::string to_string(TopologyKind kind) {
  switch (kind) {
    case TopologyKind::ring: return "ring";
    case TopologyKind::full: return "full";
    case TopologyKind::jumper: return "jumper";
  }
  return "?";
}

inline TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "ring") return TopologyKind::ring;
  if (s == "full") return TopologyKind::full;
  if (s == "jumper") return TopologyKind::jumper;
  throw InvalidInput("unknown topology kind '" + s + "' (expected ring, full or jumper)");
}

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected graph over the spectral views. Edges are stored with the
/// smaller endpoint first and sorted, so equal graphs serialize identically.
struct GraphTopology {
  std::size_t node_count = 0;
  TopologyKind kind = TopologyKind::ring;
  std::size_t step = 0;  // jumper only
  bool include_ring = false;
  std::vector<Edge> edges;

  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(node_count);
    for (auto [a, b] : edges) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    for (auto& n : adj) std::sort(n.begin(), n.end());
    return adj;
  }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(node_count, 0);
    for (auto [a, b] : edges) {
      ++d[a];
      ++d[b];
    }
    return d;
  }

  bool operator==(const GraphTopology&) const = default;
};

inline GraphTopology build_topology(TopologyKind kind, std::size_t nodes, std::optional<std::size_t> step = {},
                                    bool include_ring = false) {
  if (nodes < 2) throw InvalidInput("topology needs at least 2 nodes");
  GraphTopology g;
  g.node_count = nodes;
  g.kind = kind;
  std::vector<Edge> raw;
  auto add = [&](std::size_t a, std::size_t b) {
    if (a == b) return;
    raw.emplace_back(std::min(a, b), std::max(a, b));
  };
  auto add_ring = [&] {
    for (std::size_t i = 0; i < nodes; ++i) add(i, (i + 1) % nodes);
  };
  switch (kind) {
    case TopologyKind::ring:
      add_ring();
      break;
    case TopologyKind::full:
      for (std::size_t i = 0; i < nodes; ++i)
        for (std::size_t j = i + 1; j < nodes; ++j) add(i, j);
      break;
    case TopologyKind::jumper:
      if (!step) throw InvalidInput("jumper topology requires a step N");
      if (*step < 1 || *step >= nodes)
        throw InvalidInput("jumper step must satisfy 1 <= N < " + std::to_string(nodes));
      g.step = *step;
      g.include_ring = include_ring;
      for (std::size_t i = 0; i < nodes; ++i) add(i, (i + *step) % nodes);
      if (include_ring) add_ring();
      break;
  }
  std::sort(raw.begin(), raw.end());
  raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
  g.edges = std::move(raw);
  return g;
}

struct GraphStats {
  std::map<std::size_t, std::size_t> degree_histogram;  // degree -> node count
  std::vector<std::vector<std::size_t>> components;     // sorted members, ordered by smallest member
  std::vector<std::size_t> component_sizes;
  std::vector<std::size_t> diameters;

  std::size_t component_count() const { return components.size(); }
};

/// BFS distances from `source`; unreachable nodes get SIZE_MAX.
inline std::vector<std::size_t> bfs_distances(const std::vector<std::vector<std::size_t>>& adj, std::size_t source) {
  std::vector<std::size_t> dist(adj.size(), static_cast<std::size_t>(-1));
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u])
      if (dist[v] == static_cast<std::size_t>(-1)) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return dist;
}

inline GraphStats analyze(const GraphTopology& g) {
  GraphStats stats;
  for (std::size_t d : g.degrees()) ++stats.degree_histogram[d];
  const auto adj = g.adjacency();
  std::vector<bool> seen(g.node_count, false);
  for (std::size_t s = 0; s < g.node_count; ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> members;
    const auto dist = bfs_distances(adj, s);
    for (std::size_t v = 0; v < g.node_count; ++v)
      if (dist[v] != static_cast<std::size_t>(-1)) {
        members.push_back(v);
        seen[v] = true;
      }
    std::size_t diameter = 0;
    for (std::size_t u : members) {
      const auto du = bfs_distances(adj, u);
      for (std::size_t v : members) diameter = std::max(diameter, du[v]);
    }
    stats.component_sizes.push_back(members.size());
    stats.diameters.push_back(diameter);
    stats.components.push_back(std::move(members));
  }
  return stats;
}

inline nlohmann::ordered_json topology_to_json(const GraphTopology& g) {
  nlohmann::ordered_json j;
  j["v"] = g.node_count;
  j["kind"] = to_string(g.kind);
  j["step"] = g.step;
  j["include_ring"] = g.include_ring;
  auto edges = nlohmann::ordered_json::array();
  for (auto [a, b] : g.edges) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  return j;
}

/// Parses and re-validates a serialized graph: the edge list must equal the
/// one its (kind, v, step, include_ring) description generates.
inline GraphTopology topology_from_json(const nlohmann::json& j) {
  GraphTopology g;
  try {
    const auto kind = topology_kind_from_string(j.at("kind").get<std::string>());
    const auto v = j.at("v").get<std::size_t>();
    const auto step = j.value("step", std::size_t{0});
    const bool ring = j.value("include_ring", false);
    g = build_topology(kind, v, kind == TopologyKind::jumper ? std::optional(step) : std::nullopt, ring);
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      const auto a = e.at(0).get<std::size_t>(), b = e.at(1).get<std::size_t>();
      edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(edges.begin(), edges.end());
    if (edges != g.edges) throw FormatError("graph edge list does not match its declared kind/step");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed graph JSON: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid graph JSON: ") + e.what());
  }
  return g;
}

inline nlohmann::ordered_json stats_to_json(const GraphStats& s, const GraphTopology& g) {
  nlohmann::ordered_json j;
  j["v"] = g.node_count;
  j["kind"] = to_string(g.kind);
  j["step"] = g.step;
  j["include_ring"] = g.include_ring;
  j["edge_count"] = g.edges.size();
  auto hist = nlohmann::ordered_json::object();
  for (auto [d, n] : s.degree_histogram) hist[std::to_string(d)] = n;
  j["degree_histogram"] = std::move(hist);
  j["connected_components"] = s.component_count();
  j["component_sizes"] = s.component_sizes;
  j["diameters"] = s.diameters;
  return j;
}

inline void write_topology(const GraphTopology& g, const std::string& path) {
  write_file_text(path, topology_to_json(g).dump() + "\n");
}

inline GraphTopology read_topology(const std::string& path) {
  try {
    return topology_from_json(nlohmann::json::parse(read_file_text(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace msvl
