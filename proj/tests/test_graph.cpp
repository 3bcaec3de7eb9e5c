#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>

using namespace enggnn;

namespace {

FeatureGraph path_graph(std::size_t p) {
  FeatureGraph g(p, Directedness::undirected);
  for (std::size_t v = 0; v + 1 < p; ++v) g.add_edge(v, v + 1);
  return g;
}

FeatureGraph star_graph(std::size_t p) {
  FeatureGraph g(p, Directedness::undirected);
  for (std::size_t v = 1; v < p; ++v) g.add_edge(0, v);
  return g;
}

bool connected(const FeatureGraph& g) {
  const auto d = bfs_distances(g.neighbor_lists(), 0);
  return std::none_of(d.begin(), d.end(), [](std::size_t x) { return x == std::numeric_limits<std::size_t>::max(); });
}

// All-pairs BFS written independently of the library routine.
std::vector<double> brute_closeness(const FeatureGraph& g) {
  const auto p = g.node_count();
  const Matrix a = g.adjacency();
  std::vector<double> out(p, 0.0);
  for (std::size_t s = 0; s < p; ++s) {
    std::vector<long> dist(p, -1);
    std::vector<std::size_t> frontier{s};
    dist[s] = 0;
    for (long level = 1; !frontier.empty(); ++level) {
      std::vector<std::size_t> next;
      for (auto u : frontier)
        for (std::size_t v = 0; v < p; ++v)
          if (a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) != 0.0 && dist[v] < 0) {
            dist[v] = level;
            next.push_back(v);
          }
      frontier = std::move(next);
    }
    double total = 0.0, reach = 0.0;
    for (std::size_t v = 0; v < p; ++v)
      if (v != s && dist[v] > 0) {
        total += static_cast<double>(dist[v]);
        reach += 1.0;
      }
    if (total > 0.0) out[s] = (reach / total) * (reach / static_cast<double>(p - 1));
  }
  return out;
}

}  // namespace

TEST(SelfLoops, EmptyGraphGivesIdentity) {
  EXPECT_EQ(add_self_loops(FeatureGraph(3, Directedness::undirected)), Matrix::Identity(3, 3));
}

TEST(SelfLoops, UndirectedEdgeFillsBlock) {
  FeatureGraph g(2, Directedness::undirected);
  g.add_edge(0, 1);
  EXPECT_EQ(add_self_loops(g), Matrix::Ones(2, 2));
}

TEST(SelfLoops, ExistingSelfLoopClamps) {
  FeatureGraph g(2, Directedness::directed);
  g.add_edge(0, 1);
  g.add_edge(0, 0);
  Matrix expected(2, 2);
  expected << 1, 1, 0, 1;
  EXPECT_EQ(add_self_loops(g), expected);
}

TEST(SelfLoops, ClampIsIdempotent) {
  Rng rng(3);
  const auto g = support::random_graph(10, 0.3, Directedness::directed, rng);
  const Matrix once = add_self_loops(g);
  const Matrix twice = (once + Matrix::Identity(10, 10)).cwiseMin(1.0);
  EXPECT_EQ(once, twice);
}

TEST(FeatureGraphType, UndirectedStoresOrderedPairsWithoutDuplicates) {
  FeatureGraph g(4, Directedness::undirected);
  EXPECT_TRUE(g.add_edge(3, 1));
  EXPECT_FALSE(g.add_edge(1, 3));
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(*g.edges().begin(), (Edge{1, 3}));
  EXPECT_TRUE(g.has_edge(3, 1));
  const Matrix a = g.adjacency();
  EXPECT_EQ(a, a.transpose());
  EXPECT_THROW(g.add_edge(0, 4), Error);
}

TEST(BarabasiAlbert, TreeWhenMIsOne) {
  Rng rng(1);
  const auto g = generate_ba_graph(5, 1, rng);
  EXPECT_EQ(g.edge_count(), 4u);
  EXPECT_TRUE(connected(g));
}

TEST(BarabasiAlbert, TriangleForThreeNodes) {
  Rng rng(2);
  const auto g = generate_ba_graph(3, 2, rng);
  EXPECT_EQ(g.edge_count(), 3u);
}

TEST(BarabasiAlbert, EdgeCountHandshakeAndConnectivity) {
  for (std::size_t p : {10u, 57u, 200u})
    for (std::size_t m : {1u, 2u, 3u, 5u}) {
      if (m >= p) continue;
      Rng rng(p * 31 + m);
      const auto g = generate_ba_graph(p, m, rng);
      EXPECT_EQ(g.edge_count(), m * (m - 1) / 2 + (p - m) * m);
      const auto deg = g.degrees();
      EXPECT_EQ(std::accumulate(deg.begin(), deg.end(), std::size_t{0}), 2 * g.edge_count());
      EXPECT_TRUE(connected(g));
      EXPECT_FALSE(g.directed());
    }
}

TEST(BarabasiAlbert, InvalidM) {
  Rng rng(1);
  EXPECT_THROW(generate_ba_graph(5, 0, rng), Error);
  EXPECT_THROW(generate_ba_graph(5, 5, rng), Error);
}

TEST(BarabasiAlbert, HeavierTailThanErdosRenyi) {
  const std::size_t p = 2000, m = 2;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto ba = generate_ba_graph(p, m, rng);
    const std::size_t edges = ba.edge_count();
    // G(p, M): the same number of edges placed uniformly at random
    FeatureGraph er(p, Directedness::undirected);
    while (er.edge_count() < edges) {
      const auto u = uniform_index(rng, p), v = uniform_index(rng, p);
      if (u != v) er.add_edge(u, v);
    }
    const auto dba = ba.degrees(), der = er.degrees();
    const auto max_ba = *std::max_element(dba.begin(), dba.end());
    const auto max_er = *std::max_element(der.begin(), der.end());
    EXPECT_GE(max_ba, 3 * max_er) << "seed " << seed;
  }
}

TEST(BarabasiAlbert, SeedDeterminesGraph) {
  Rng a(9), b(9);
  EXPECT_EQ(generate_ba_graph(100, 2, a).edges(), generate_ba_graph(100, 2, b).edges());
}

TEST(Closeness, StarCenterDominates) {
  const auto c = closeness_centrality(star_graph(4));
  for (std::size_t v = 1; v < 4; ++v) EXPECT_GT(c[0], c[v]);
}

TEST(Closeness, PathOfThree) {
  const auto c = closeness_centrality(path_graph(3));
  EXPECT_DOUBLE_EQ(c[1], 1.0);
  EXPECT_DOUBLE_EQ(c[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c[2], 2.0 / 3.0);
}

TEST(Closeness, SingleNodeIsZero) {
  const auto c = closeness_centrality(FeatureGraph(1, Directedness::undirected));
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], 0.0);
}

TEST(Closeness, DirectedGraphRejected) {
  EXPECT_THROW(closeness_centrality(FeatureGraph(3, Directedness::directed)), Error);
}

TEST(Closeness, MatchesBruteForceOnRandomGraphs) {
  Rng rng(44);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t p = 2 + uniform_index(rng, 49);
    const double prob = uniform(rng, 0.0, 0.3);
    const auto g = support::random_graph(p, prob, Directedness::undirected, rng);
    const auto c = closeness_centrality(g);
    const auto oracle = brute_closeness(g);
    for (std::size_t v = 0; v < p; ++v) {
      EXPECT_EQ(c[v], oracle[v]) << "trial " << trial << " node " << v;
      EXPECT_GE(c[v], 0.0);
      EXPECT_LE(c[v], 1.0);
    }
  }
}

TEST(Merge, SingleGraphIsItself) {
  FeatureGraph g(3, Directedness::directed);
  g.add_edge(0, 1);
  g.add_edge(2, 1);
  EXPECT_EQ(merge_graphs({g}).edges(), g.edges());
}

TEST(Merge, DisjointEdgesUnion) {
  FeatureGraph a(4, Directedness::directed), b(4, Directedness::directed);
  a.add_edge(0, 1);
  b.add_edge(2, 3);
  const auto m = merge_graphs({a, b});
  EXPECT_EQ(m.edge_count(), 2u);
  EXPECT_TRUE(m.has_edge(0, 1));
  EXPECT_TRUE(m.has_edge(2, 3));
}

TEST(Merge, OverlapDeduplicates) {
  FeatureGraph a(3, Directedness::directed), b(3, Directedness::directed);
  a.add_edge(0, 1);
  a.add_edge(1, 2);
  b.add_edge(1, 2);
  const auto m = merge_graphs({a, b});
  EXPECT_EQ(m.edges(), (std::set<Edge>{{0, 1}, {1, 2}}));
}

TEST(Merge, MixedDirectednessAndSizeRejected) {
  FeatureGraph a(3, Directedness::directed), b(3, Directedness::undirected), c(4, Directedness::directed);
  EXPECT_THROW(merge_graphs({a, b}), Error);
  EXPECT_THROW(merge_graphs({a, c}), Error);
}

TEST(Merge, CommutativeAndAssociative) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<FeatureGraph> gs;
    for (int k = 0; k < 3; ++k) gs.push_back(support::random_graph(12, 0.15, Directedness::directed, rng));
    const auto ref = merge_graphs(gs).edges();
    std::vector<int> perm{0, 1, 2};
    do {
      EXPECT_EQ(merge_graphs({gs[perm[0]], gs[perm[1]], gs[perm[2]]}).edges(), ref);
      EXPECT_EQ(merge_graphs({merge_graphs({gs[perm[0]], gs[perm[1]]}), gs[perm[2]]}).edges(), ref);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(OneHop, EmptySet) { EXPECT_TRUE(one_hop_expand(path_graph(4), {}).empty()); }

TEST(OneHop, StarCenterReachesAll) {
  const auto s = one_hop_expand(star_graph(6), {0});
  EXPECT_EQ(s.size(), 6u);
}

TEST(OneHop, PathNeighbours) {
  EXPECT_EQ(one_hop_expand(path_graph(4), {1}), (NodeSet{0, 1, 2}));
}

TEST(OneHop, SupersetOfInput) {
  Rng rng(8);
  const auto g = support::random_graph(30, 0.05, Directedness::undirected, rng);
  const NodeSet s{1, 5, 9, 22};
  const auto e = one_hop_expand(g, s);
  for (auto v : s) EXPECT_TRUE(e.count(v));
}
