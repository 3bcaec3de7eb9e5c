#pragma once

// Feature graphs over a fixed universe of p features.

#include "enggnn/common.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace enggnn {

enum class Directedness { directed, undirected };

using Edge = std::pair<std::size_t, std::size_t>;
using NodeSet = std::set<std::size_t>;

// Undirected edges are stored once as (min, max). `vertices` is the node set
// V; for graphs read from an edge list it is every feature, for tree graphs
// it is the set of split features.
class FeatureGraph {
 public:
  FeatureGraph() = default;
  FeatureGraph(std::size_t node_count, Directedness d) : p_(node_count), dir_(d) {
    for (std::size_t v = 0; v < p_; ++v) vertices_.insert(v);
  }

  static FeatureGraph with_vertices(std::size_t node_count, Directedness d, NodeSet vertices) {
    FeatureGraph g(node_count, d);
    for (auto v : vertices) g.check_node(v);
    g.vertices_ = std::move(vertices);
    return g;
  }

  std::size_t node_count() const { return p_; }
  Directedness directedness() const { return dir_; }
  bool directed() const { return dir_ == Directedness::directed; }
  const std::set<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  const NodeSet& vertices() const { return vertices_; }
  const std::vector<std::string>& names() const { return names_; }

  void set_names(std::vector<std::string> names) {
    if (!names.empty() && names.size() != p_)
      throw Error("graph names: expected " + std::to_string(p_) + " names");
    names_ = std::move(names);
  }

  // Returns false when the edge was already present.
  bool add_edge(std::size_t u, std::size_t v) {
    check_node(u);
    check_node(v);
    if (!directed() && u > v) std::swap(u, v);
    vertices_.insert(u);
    vertices_.insert(v);
    return edges_.insert({u, v}).second;
  }

  bool has_edge(std::size_t u, std::size_t v) const {
    if (!directed() && u > v) std::swap(u, v);
    return edges_.count({u, v}) > 0;
  }

  // 0/1 adjacency, symmetric for undirected graphs.
  Matrix adjacency() const {
    Matrix a = Matrix::Zero(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
    for (const auto& [u, v] : edges_) {
      a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = 1.0;
      if (!directed()) a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = 1.0;
    }
    return a;
  }

  // Out-neighbours for directed graphs; all neighbours otherwise.
  std::vector<std::vector<std::size_t>> neighbor_lists() const {
    std::vector<std::vector<std::size_t>> nb(p_);
    for (const auto& [u, v] : edges_) {
      if (u == v) continue;
      nb[u].push_back(v);
      if (!directed()) nb[v].push_back(u);
    }
    for (auto& l : nb) std::sort(l.begin(), l.end());
    return nb;
  }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(p_, 0);
    for (const auto& [u, v] : edges_) {
      ++d[u];
      ++d[v];
    }
    return d;
  }

 private:
  void check_node(std::size_t v) const {
    if (v >= p_)
      throw Error("node " + std::to_string(v) + " out of range [0," + std::to_string(p_) + ")");
  }

  std::size_t p_ = 0;
  Directedness dir_ = Directedness::undirected;
  std::set<Edge> edges_;
  NodeSet vertices_;
  std::vector<std::string> names_;
};

// A~ = A + I clamped to {0, 1}.
inline Matrix add_self_loops(const FeatureGraph& g) {
  Matrix a = g.adjacency();
  a.diagonal().setOnes();
  return a;
}

// Barabasi-Albert growth: a clique on the first m nodes, then every new node
// attaches to m distinct existing nodes chosen proportionally to degree.
// The seed clique for m = 1 is a single node, so the first newcomer links
// to it unconditionally.
inline FeatureGraph generate_ba_graph(std::size_t p, std::size_t m, Rng& rng) {
  if (m < 1 || m >= p)
    throw Error("generate_ba_graph: need 1 <= m < p (m=" + std::to_string(m) +
                ", p=" + std::to_string(p) + ")");
  FeatureGraph g(p, Directedness::undirected);
  // Each endpoint appears once per incident edge, so sampling uniformly from
  // this list is sampling proportional to degree.
  std::vector<std::size_t> endpoints;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      g.add_edge(j, i);
      endpoints.push_back(i);
      endpoints.push_back(j);
    }
  for (std::size_t v = m; v < p; ++v) {
    std::vector<std::size_t> targets;
    if (endpoints.empty()) {
      // only reachable for m == 1 with a single isolated seed node
      targets.push_back(0);
    } else {
      while (targets.size() < m) {
        const std::size_t t = endpoints[uniform_index(rng, endpoints.size())];
        if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
      }
    }
    for (auto t : targets) {
      g.add_edge(t, v);
      endpoints.push_back(t);
      endpoints.push_back(v);
    }
  }
  return g;
}

// Unweighted BFS distances from `src`; unreachable nodes get SIZE_MAX.
inline std::vector<std::size_t> bfs_distances(const std::vector<std::vector<std::size_t>>& nb,
                                              std::size_t src) {
  std::vector<std::size_t> dist(nb.size(), std::numeric_limits<std::size_t>::max());
  std::deque<std::size_t> queue{src};
  dist[src] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto v : nb[u])
      if (dist[v] == std::numeric_limits<std::size_t>::max()) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return dist;
}

// Wasserman-Faust closeness: (r-1)/sum(d) scaled by (r-1)/(p-1), where r is
// the size of the node's reachable set. Isolated nodes score 0.
inline std::vector<double> closeness_centrality(const FeatureGraph& g) {
  if (g.directed()) throw Error("closeness_centrality expects an undirected graph");
  const std::size_t p = g.node_count();
  std::vector<double> c(p, 0.0);
  if (p <= 1) return c;
  const auto nb = g.neighbor_lists();
  for (std::size_t v = 0; v < p; ++v) {
    const auto dist = bfs_distances(nb, v);
    std::size_t total = 0, reach = 0;
    for (auto d : dist)
      if (d != std::numeric_limits<std::size_t>::max()) {
        total += d;
        ++reach;
      }
    if (reach <= 1 || total == 0) continue;
    const double r1 = static_cast<double>(reach - 1);
    c[v] = (r1 / static_cast<double>(total)) * (r1 / static_cast<double>(p - 1));
  }
  return c;
}

// Exact set union of edges and vertices.
inline FeatureGraph merge_graphs(const std::vector<FeatureGraph>& graphs) {
  if (graphs.empty()) throw Error("merge_graphs: no graphs");
  const auto p = graphs.front().node_count();
  const auto dir = graphs.front().directedness();
  NodeSet vertices;
  for (const auto& g : graphs) {
    if (g.directedness() != dir) throw Error("merge_graphs: mixed directedness");
    if (g.node_count() != p) throw Error("merge_graphs: node universes differ");
    vertices.insert(g.vertices().begin(), g.vertices().end());
  }
  auto out = FeatureGraph::with_vertices(p, dir, std::move(vertices));
  for (const auto& g : graphs)
    for (const auto& [u, v] : g.edges()) out.add_edge(u, v);
  if (!graphs.front().names().empty()) out.set_names(graphs.front().names());
  return out;
}

// S plus every neighbour of a member of S (both edge directions).
inline NodeSet one_hop_expand(const FeatureGraph& g, const NodeSet& s) {
  NodeSet out = s;
  for (const auto& [u, v] : g.edges()) {
    if (s.count(u)) out.insert(v);
    if (s.count(v)) out.insert(u);
  }
  return out;
}

}  // namespace enggnn
