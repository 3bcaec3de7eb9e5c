#include "support.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <numeric>

using namespace enggnn;

namespace {

double accuracy(const Vector& prob, const Labels& y) {
  int ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += (prob(static_cast<Eigen::Index>(i)) > 0.5 ? 1 : 0) == y[i];
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

double log_loss(const Vector& prob, const Labels& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = prob(static_cast<Eigen::Index>(i));
    s -= y[i] ? std::log(p) : std::log(1.0 - p);
  }
  return s / static_cast<double>(y.size());
}

// Jittered XOR with unequal quadrant sizes so greedy root splits have
// positive gain.
void xor_data(Matrix& x, Labels& y) {
  const int counts[4] = {30, 45, 35, 50};
  const double cx[4] = {0, 0, 1, 1}, cy[4] = {0, 1, 0, 1};
  const int label[4] = {0, 1, 1, 0};
  const int n = 30 + 45 + 35 + 50;
  x.resize(n, 2);
  y.assign(static_cast<std::size_t>(n), 0);
  Rng rng(3);
  int r = 0;
  for (int q = 0; q < 4; ++q)
    for (int k = 0; k < counts[q]; ++k, ++r) {
      x(r, 0) = cx[q] + uniform(rng, -0.1, 0.1);
      x(r, 1) = cy[q] + uniform(rng, -0.1, 0.1);
      y[static_cast<std::size_t>(r)] = label[q];
    }
}

TreeNode split_node(int feature, int left, int right, double gain = 0.0) {
  TreeNode n;
  n.feature = feature;
  n.left = left;
  n.right = right;
  n.gain = gain;
  return n;
}

TreeNode leaf(double v = 0.0) {
  TreeNode n;
  n.value = v;
  return n;
}

}  // namespace

TEST(Boosting, ConstantLabelsPredictTheClass) {
  Rng rng(1);
  const Matrix x = support::random_matrix(20, 3, rng);
  WarningCapture cap;
  const auto ens = fit_gradient_boosted_trees(x, Labels(20, 1));
  EXPECT_FALSE(cap.messages().empty());
  const Vector p = ens.predict_proba(x);
  EXPECT_GT(p.minCoeff(), 1.0 - 1e-5);
}

TEST(Boosting, ThresholdSeparableWithStumps) {
  Matrix x(40, 1);
  Labels y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = i;
    y[static_cast<std::size_t>(i)] = i >= 17;
  }
  BoostParams prm;
  prm.max_depth = 1;
  prm.n_trees = 5;
  EXPECT_EQ(accuracy(fit_gradient_boosted_trees(x, y, prm).predict_proba(x), y), 1.0);
}

TEST(Boosting, XorNeedsDepthTwo) {
  Matrix x;
  Labels y;
  xor_data(x, y);
  BoostParams prm;
  prm.n_trees = 10;
  prm.max_depth = 1;
  EXPECT_LT(accuracy(fit_gradient_boosted_trees(x, y, prm).predict_proba(x), y), 0.7);
  prm.max_depth = 2;
  // greedy root splits on XOR can land inside a cluster, so not exactly 1
  EXPECT_GT(accuracy(fit_gradient_boosted_trees(x, y, prm).predict_proba(x), y), 0.95);
}

TEST(Boosting, TrainingLossNonIncreasingInTreeCount) {
  Rng rng(5);
  const Matrix x = support::random_matrix(120, 6, rng);
  Labels y(120);
  for (Eigen::Index i = 0; i < 120; ++i)
    y[static_cast<std::size_t>(i)] = x(i, 0) * x(i, 1) + 0.3 * x(i, 2) + uniform(rng, -0.3, 0.3) > 0;
  BoostParams prm;
  prm.n_trees = 25;
  const auto full = fit_gradient_boosted_trees(x, y, prm);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= full.trees.size(); ++k) {
    TreeEnsemble part = full;
    part.trees.resize(k);
    const double loss = log_loss(part.predict_proba(x), y);
    EXPECT_LE(loss, prev + 1e-12) << "after " << k << " trees";
    prev = loss;
  }
}

TEST(Boosting, DefaultTreeCountAndDepth) {
  Rng rng(6);
  const Matrix x = support::random_matrix(60, 23, rng);
  const Labels y = support::random_labels(60, rng);
  const auto ens = fit_gradient_boosted_trees(x, y);
  EXPECT_EQ(ens.trees.size(), 5u);  // round(0.2 * 23)
  for (const auto& t : ens.trees) EXPECT_LE(t.depth(), 3u);
  EXPECT_EQ(auto_tree_count(1), 1);
  EXPECT_EQ(auto_tree_count(250), 50);
}

TEST(Boosting, Deterministic) {
  Rng rng(7);
  const Matrix x = support::random_matrix(50, 5, rng);
  const Labels y = support::random_labels(50, rng);
  EXPECT_EQ(fit_gradient_boosted_trees(x, y).predict_proba(x), fit_gradient_boosted_trees(x, y).predict_proba(x));
}

TEST(Boosting, RejectsBadInput) {
  EXPECT_THROW(fit_gradient_boosted_trees(Matrix::Ones(1, 2), Labels{1}), Error);
  EXPECT_THROW(fit_gradient_boosted_trees(Matrix::Ones(2, 2), Labels{0, 2}), Error);
  EXPECT_THROW(fit_gradient_boosted_trees(Matrix::Ones(3, 2), Labels{0, 1}), Error);
}

TEST(Boosting, GraphNodesHaveNonzeroGain) {
  Rng rng(8);
  const Matrix x = support::random_matrix(100, 12, rng);
  Labels y(100);
  for (Eigen::Index i = 0; i < 100; ++i) y[static_cast<std::size_t>(i)] = x(i, 3) + x(i, 7) > 0;
  BoostParams prm;
  prm.n_trees = 8;
  const auto ens = fit_gradient_boosted_trees(x, y, prm);
  const auto g = extract_feature_graph(ens, 12);
  const auto gain = ensemble_gain_importance(ens);
  for (auto v : g.vertices()) EXPECT_GT(gain[v], 0.0);
  EXPECT_TRUE(g.directed());
}

TEST(Forest, SingleTreeFitsSeparableData) {
  Rng rng(9);
  const Matrix x = support::random_matrix(60, 4, rng);
  Labels y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) - x(i, 2) > 0.1;
  ForestParams prm;
  prm.n_trees = 1;
  prm.bootstrap = false;
  EXPECT_EQ(accuracy(fit_random_forest(x, y, prm).predict_proba(x), y), 1.0);
}

TEST(Forest, ConstantFeaturesGiveStumpsAtThePrior) {
  const Matrix x = Matrix::Constant(10, 3, 2.0);
  Labels y{1, 0, 0, 1, 0, 0, 0, 1, 0, 0};
  ForestParams prm;
  prm.n_trees = 4;
  prm.bootstrap = false;
  const auto ens = fit_random_forest(x, y, prm);
  for (const auto& t : ens.trees) EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_NEAR(ens.predict_proba(x)(0), 0.3, 1e-15);
}

TEST(Forest, SameSeedSameForest) {
  Rng rng(10);
  const Matrix x = support::random_matrix(80, 9, rng);
  const Labels y = support::random_labels(80, rng);
  ForestParams prm;
  prm.n_trees = 6;
  prm.seed = 42;
  const auto a = fit_random_forest(x, y, prm), b = fit_random_forest(x, y, prm);
  ASSERT_EQ(a.trees.size(), b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    ASSERT_EQ(a.trees[t].nodes.size(), b.trees[t].nodes.size());
    for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
      EXPECT_EQ(a.trees[t].nodes[k].feature, b.trees[t].nodes[k].feature);
      EXPECT_EQ(a.trees[t].nodes[k].threshold, b.trees[t].nodes[k].threshold);
    }
  }
  prm.seed = 43;
  const auto c = fit_random_forest(x, y, prm);
  EXPECT_NE(a.predict_proba(x), c.predict_proba(x));
}

TEST(Forest, DepthLimitRespected) {
  Rng rng(11);
  const Matrix x = support::random_matrix(100, 5, rng);
  const Labels y = support::random_labels(100, rng);
  ForestParams prm;
  prm.n_trees = 5;
  prm.max_depth = 3;
  for (const auto& t : fit_random_forest(x, y, prm).trees) EXPECT_LE(t.depth(), 3u);
}

TEST(TreeGraph, StumpHasVertexButNoEdges) {
  TreeEnsemble ens;
  DecisionTree t;
  t.nodes = {split_node(3, 1, 2), leaf(), leaf()};
  ens.trees.push_back(t);
  const auto g = extract_feature_graph(ens, 5);
  EXPECT_EQ(g.vertices(), (NodeSet{3}));
  EXPECT_EQ(g.edge_count(), 0u);
}

TEST(TreeGraph, DepthTwoTree) {
  TreeEnsemble ens;
  DecisionTree t;
  t.nodes = {split_node(0, 1, 2), split_node(1, 3, 4), split_node(2, 5, 6), leaf(), leaf(), leaf(), leaf()};
  ens.trees.push_back(t);
  const auto g = extract_feature_graph(ens, 3);
  EXPECT_EQ(g.edges(), (std::set<Edge>{{0, 1}, {0, 2}}));
}

TEST(TreeGraph, UnionWithSelfLoop) {
  TreeEnsemble ens;
  DecisionTree a, b;
  a.nodes = {split_node(0, 1, 2), split_node(1, 3, 4), leaf(), leaf(), leaf()};
  b.nodes = {split_node(0, 1, 2), split_node(1, 3, 4), leaf(), split_node(1, 5, 6), leaf(), leaf(), leaf()};
  ens.trees = {a, b};
  const auto g = extract_feature_graph(ens, 2);
  EXPECT_EQ(g.edges(), (std::set<Edge>{{0, 1}, {1, 1}}));
}

TEST(TreeGraph, MatchesTraversalOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = 2 + uniform_index(rng, 8);
    TreeEnsemble ens;
    const int m = 1 + static_cast<int>(uniform_index(rng, 3));
    std::set<Edge> edges;
    NodeSet vertices;
    for (int k = 0; k < m; ++k) {
      ens.trees.push_back(support::random_tree(p, 1 + static_cast<int>(uniform_index(rng, 3)), rng));
      support::traversal_edges(ens.trees.back(), 0, edges, vertices);
    }
    const auto g = extract_feature_graph(ens, p);
    EXPECT_EQ(g.edges(), edges);
    EXPECT_EQ(g.vertices(), vertices);
  }
}

TEST(GainImportance, Examples) {
  TreeEnsemble ens;
  ens.feature_count = 4;
  DecisionTree stump;
  stump.nodes = {split_node(2, 1, 2, 4.0), leaf(), leaf()};
  ens.trees = {stump};
  auto s = ensemble_gain_importance(ens);
  EXPECT_EQ(s[2], 4.0);
  EXPECT_EQ(s[0], 0.0);
  DecisionTree twice;
  twice.nodes = {split_node(1, 1, 2, 2.0), split_node(1, 3, 4, 4.0), leaf(), leaf(), leaf()};
  ens.trees = {twice};
  s = ensemble_gain_importance(ens);
  EXPECT_EQ(s[1], 3.0);
}

TEST(GiniImportance, PureStumpOnBalancedData) {
  Matrix x(8, 2);
  Labels y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i;
    x(i, 1) = 1.0;  // constant, never used
    y[static_cast<std::size_t>(i)] = i >= 4;
  }
  ForestParams prm;
  prm.n_trees = 1;
  prm.bootstrap = false;
  prm.mtry = 2;
  const auto ens = fit_random_forest(x, y, prm);
  const auto s = forest_gini_importance(ens);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_EQ(s[1], 0.0);
}

TEST(GiniImportance, NoiseFeatureScoresNearZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Matrix x = support::random_matrix(60, 2, rng);
    Labels y(60);
    for (Eigen::Index i = 0; i < 60; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) > 0.0;
    // permute the noise column
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(perm, rng);
    const Matrix noise = x.col(1);
    for (Eigen::Index i = 0; i < 60; ++i) x(i, 1) = noise(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
    ForestParams prm;
    prm.n_trees = 10;
    prm.mtry = 2;
    prm.seed = seed;
    const auto s = forest_gini_importance(fit_random_forest(x, y, prm));
    EXPECT_LT(s[1], 1e-12) << "seed " << seed;
    EXPECT_GT(s[0], 0.4);
  }
}

TEST(Importance, KindMismatchRejected) {
  TreeEnsemble ens;
  ens.kind = EnsembleKind::forest;
  EXPECT_THROW(ensemble_gain_importance(ens), Error);
  ens.kind = EnsembleKind::boosted;
  EXPECT_THROW(forest_gini_importance(ens), Error);
}
