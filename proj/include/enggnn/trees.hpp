#pragma once

// Gradient-boosted trees with the regularized second-order objective and
// exact greedy splits, plus a Gini random forest. Both feed directed feature
// graphs (parent split feature -> child split feature) and split-based
// importances.

#include "enggnn/common.hpp"
#include "enggnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace enggnn {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;   // leaf output
  double gain = 0.0;    // split gain (boosting) or weighted impurity decrease (forest)
  double weight = 0.0;  // hessian sum (boosting) or sample count (forest)

  bool is_leaf() const { return feature < 0; }
};

// Rows with x[feature] < threshold go left.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  template <class Row>
  double predict(const Row& x) const {
    int k = 0;
    while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(k)];
      k = x(n.feature) < n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(k)].value;
  }

  std::size_t depth() const { return depth_from(0); }

 private:
  std::size_t depth_from(int k) const {
    const auto& n = nodes[static_cast<std::size_t>(k)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(n.left), depth_from(n.right));
  }
};

enum class EnsembleKind { boosted, forest };

struct TreeEnsemble {
  std::vector<DecisionTree> trees;
  EnsembleKind kind = EnsembleKind::boosted;
  double base_score = 0.0;  // margin offset (boosted only)
  double shrinkage = 1.0;
  std::size_t feature_count = 0;

  // P(y = 1) per row.
  Vector predict_proba(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != feature_count)
      throw Error("ensemble expects " + std::to_string(feature_count) + " columns");
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto row = x.row(i);
      double s = 0.0;
      for (const auto& t : trees) s += t.predict(row);
      if (kind == EnsembleKind::boosted) {
        out(i) = 1.0 / (1.0 + std::exp(-(base_score + shrinkage * s)));
      } else {
        out(i) = s / static_cast<double>(trees.size());
      }
    }
    return out;
  }
};

// Tree count proportional to feature size.
inline int auto_tree_count(std::size_t p) {
  return std::max(1, static_cast<int>(std::lround(0.2 * static_cast<double>(p))));
}

struct BoostParams {
  int n_trees = 0;  // 0 -> auto_tree_count(p)
  int max_depth = 3;
  double shrinkage = 0.3;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 0;  // exact greedy is deterministic; kept for config symmetry
};

struct ForestParams {
  int n_trees = 0;    // 0 -> auto_tree_count(p)
  int max_depth = 0;  // 0 -> unlimited
  int mtry = 0;       // 0 -> floor(sqrt(p))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

namespace detail {

inline void check_tree_inputs(const Matrix& x, const Labels& y) {
  if (x.rows() < 2) throw Error("tree fitting needs at least 2 samples");
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw Error("tree fitting: row count differs from label count");
  if (!x.allFinite()) throw Error("tree fitting: non-finite feature value");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] != 0 && y[i] != 1) throw Error("label at row " + std::to_string(i) + " is not binary");
}

inline bool single_class(const Labels& y) {
  return std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); });
}

inline double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

// Per-feature row orders by ascending value (ties by row index).
inline std::vector<std::vector<std::size_t>> presort(const Matrix& x) {
  std::vector<std::vector<std::size_t>> orders(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& o = orders[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(x.rows()));
    std::iota(o.begin(), o.end(), std::size_t{0});
    std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
      return x(static_cast<Eigen::Index>(a), f) < x(static_cast<Eigen::Index>(b), f);
    });
  }
  return orders;
}

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Grows one regression tree on (grad, hess) level by level. Each level is a
// single sweep over every presorted feature column.
inline DecisionTree grow_boosted_tree(const Matrix& x,
                                      const std::vector<std::vector<std::size_t>>& orders,
                                      const std::vector<double>& grad,
                                      const std::vector<double>& hess, const BoostParams& prm) {
  const std::size_t n = grad.size();
  DecisionTree tree;
  tree.nodes.emplace_back();
  std::vector<int> node_of(n, 0);
  std::vector<int> frontier{0};

  auto objective = [&](double g, double h) { return g * g / (h + prm.lambda); };

  for (int depth = 0; depth < prm.max_depth && !frontier.empty(); ++depth) {
    // slot per tree node in this level, -1 when not on the frontier
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);
    std::vector<double> g_tot(frontier.size(), 0.0), h_tot(frontier.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const int s = node_of[i] >= 0 ? slot[static_cast<std::size_t>(node_of[i])] : -1;
      if (s < 0) continue;
      g_tot[static_cast<std::size_t>(s)] += grad[i];
      h_tot[static_cast<std::size_t>(s)] += hess[i];
    }
    std::vector<SplitCandidate> best(frontier.size());
    std::vector<double> gl(frontier.size()), hl(frontier.size()), last(frontier.size());
    std::vector<char> seen(frontier.size());
    for (std::size_t f = 0; f < orders.size(); ++f) {
      std::fill(gl.begin(), gl.end(), 0.0);
      std::fill(hl.begin(), hl.end(), 0.0);
      std::fill(seen.begin(), seen.end(), 0);
      for (auto i : orders[f]) {
        const int node = node_of[i];
        if (node < 0) continue;
        const int si = slot[static_cast<std::size_t>(node)];
        if (si < 0) continue;
        const auto s = static_cast<std::size_t>(si);
        const double v = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
        if (seen[s] && v > last[s]) {
          const double gr = g_tot[s] - gl[s], hr = h_tot[s] - hl[s];
          if (hl[s] >= prm.min_child_weight && hr >= prm.min_child_weight) {
            const double gain = 0.5 * (objective(gl[s], hl[s]) + objective(gr, hr) -
                                       objective(g_tot[s], h_tot[s])) -
                                prm.gamma;
            if (gain > best[s].gain) {
              best[s].gain = gain;
              best[s].feature = static_cast<int>(f);
              best[s].threshold = split_point(last[s], v);
            }
          }
        }
        gl[s] += grad[i];
        hl[s] += hess[i];
        last[s] = v;
        seen[s] = 1;
      }
    }
    std::vector<int> next;
    std::vector<int> left_of(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      const int k = frontier[s];
      tree.nodes[static_cast<std::size_t>(k)].weight = h_tot[s];
      if (best[s].feature < 0) continue;
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(k)];
      node.feature = best[s].feature;
      node.threshold = best[s].threshold;
      node.gain = best[s].gain;
      node.left = l;
      node.right = l + 1;
      left_of[static_cast<std::size_t>(k)] = l;
      next.push_back(l);
      next.push_back(l + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int k = node_of[i];
      if (k < 0) continue;
      const auto& node = tree.nodes[static_cast<std::size_t>(k)];
      if (slot[static_cast<std::size_t>(k)] < 0) continue;
      if (node.is_leaf()) continue;
      node_of[i] = x(static_cast<Eigen::Index>(i), node.feature) < node.threshold
                       ? node.left
                       : node.right;
    }
    frontier = std::move(next);
  }
  // Leaf values from the final row assignment.
  std::vector<double> g_sum(tree.nodes.size(), 0.0), h_sum(tree.nodes.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    g_sum[static_cast<std::size_t>(node_of[i])] += grad[i];
    h_sum[static_cast<std::size_t>(node_of[i])] += hess[i];
  }
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    auto& node = tree.nodes[k];
    if (!node.is_leaf()) continue;
    node.weight = h_sum[k];
    node.value = -g_sum[k] / (h_sum[k] + prm.lambda);
  }
  return tree;
}

inline double gini(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double q = pos / total;
  return 2.0 * q * (1.0 - q);
}

class ForestTreeBuilder {
 public:
  ForestTreeBuilder(const Matrix& x, const Labels& y, const ForestParams& prm, std::size_t mtry,
                    double total_weight, Rng& rng)
      : x_(x), y_(y), prm_(prm), mtry_(mtry), total_(total_weight), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    tree_.nodes.emplace_back();
    grow(0, std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  void grow(int k, std::vector<std::size_t> rows, int depth) {
    double pos = 0.0;
    for (auto i : rows) pos += y_[i];
    const double cnt = static_cast<double>(rows.size());
    {
      auto& node = tree_.nodes[static_cast<std::size_t>(k)];
      node.weight = cnt;
      node.value = pos / cnt;
    }
    if (pos == 0.0 || pos == cnt) return;
    if (prm_.max_depth > 0 && depth >= prm_.max_depth) return;

    const double parent = gini(pos, cnt);
    std::vector<std::size_t> features(static_cast<std::size_t>(x_.cols()));
    std::iota(features.begin(), features.end(), std::size_t{0});
    shuffle(features, rng_);

    SplitCandidate best;
    std::size_t informative = 0;
    std::vector<std::pair<double, int>> vals(rows.size());
    for (auto f : features) {
      if (informative >= mtry_) break;
      for (std::size_t r = 0; r < rows.size(); ++r)
        vals[r] = {x_(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(f)), y_[rows[r]]};
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;  // constant here
      ++informative;
      double lpos = 0.0;
      for (std::size_t r = 0; r + 1 < vals.size(); ++r) {
        lpos += vals[r].second;
        if (!(vals[r + 1].first > vals[r].first)) continue;
        const double nl = static_cast<double>(r + 1), nr = cnt - nl;
        const double child = (nl / cnt) * gini(lpos, nl) + (nr / cnt) * gini(pos - lpos, nr);
        const double decrease = (cnt / total_) * (parent - child);
        if (decrease > best.gain) {
          best.gain = decrease;
          best.feature = static_cast<int>(f);
          best.threshold = split_point(vals[r].first, vals[r + 1].first);
        }
      }
    }
    if (best.feature < 0) return;

    std::vector<std::size_t> left, right;
    for (auto i : rows)
      (x_(static_cast<Eigen::Index>(i), best.feature) < best.threshold ? left : right).push_back(i);
    const int l = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.emplace_back();
    auto& node = tree_.nodes[static_cast<std::size_t>(k)];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.gain = best.gain;
    node.left = l;
    node.right = l + 1;
    rows.clear();
    rows.shrink_to_fit();
    grow(l, std::move(left), depth + 1);
    grow(l + 1, std::move(right), depth + 1);
  }

  const Matrix& x_;
  const Labels& y_;
  const ForestParams& prm_;
  std::size_t mtry_;
  double total_;
  Rng& rng_;
  DecisionTree tree_;
};

}  // namespace detail

inline TreeEnsemble fit_gradient_boosted_trees(const Matrix& x, const Labels& y,
                                               const BoostParams& prm = {}) {
  detail::check_tree_inputs(x, y);
  if (prm.max_depth < 1) throw Error("boosting: max_depth must be >= 1");
  if (!(prm.lambda >= 0.0)) throw Error("boosting: lambda must be >= 0");
  if (!(prm.shrinkage > 0.0)) throw Error("boosting: shrinkage must be > 0");
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());

  TreeEnsemble ens;
  ens.kind = EnsembleKind::boosted;
  ens.shrinkage = prm.shrinkage;
  ens.feature_count = p;
  const double prior = std::clamp(
      std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  ens.base_score = std::log(prior / (1.0 - prior));

  if (detail::single_class(y)) {
    warn("boosting: labels contain a single class; fitting a constant model");
    DecisionTree stump;
    stump.nodes.emplace_back();
    stump.nodes.front().weight = static_cast<double>(n);
    ens.trees.push_back(std::move(stump));
    return ens;
  }

  const int m = prm.n_trees > 0 ? prm.n_trees : auto_tree_count(p);
  const auto orders = detail::presort(x);
  std::vector<double> margin(n, ens.base_score), grad(n), hess(n);
  for (int t = 0; t < m; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double pr = 1.0 / (1.0 + std::exp(-margin[i]));
      grad[i] = pr - y[i];
      hess[i] = std::max(pr * (1.0 - pr), 1e-16);
    }
    DecisionTree tree = detail::grow_boosted_tree(x, orders, grad, hess, prm);
    for (std::size_t i = 0; i < n; ++i)
      margin[i] += prm.shrinkage * tree.predict(x.row(static_cast<Eigen::Index>(i)));
    ens.trees.push_back(std::move(tree));
  }
  return ens;
}

inline TreeEnsemble fit_random_forest(const Matrix& x, const Labels& y,
                                      const ForestParams& prm = {}) {
  detail::check_tree_inputs(x, y);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto p = static_cast<std::size_t>(x.cols());
  TreeEnsemble ens;
  ens.kind = EnsembleKind::forest;
  ens.feature_count = p;
  if (prm.mtry > 0 && static_cast<std::size_t>(prm.mtry) > p)
    throw Error("random forest: mtry " + std::to_string(prm.mtry) + " exceeds the feature count " +
                std::to_string(p));
  if (prm.max_depth < 0) throw Error("random forest: max_depth must be >= 0");
  if (detail::single_class(y)) warn("random forest: labels contain a single class");

  const int m = prm.n_trees > 0 ? prm.n_trees : auto_tree_count(p);
  const std::size_t mtry =
      prm.mtry > 0 ? static_cast<std::size_t>(prm.mtry)
                   : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p)))));
  for (int t = 0; t < m; ++t) {
    // Per-tree stream so trees do not depend on each other's draws.
    Rng rng(derive_seed(prm.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> rows(n);
    if (prm.bootstrap) {
      for (auto& r : rows) r = uniform_index(rng, n);
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    detail::ForestTreeBuilder builder(x, y, prm, mtry, static_cast<double>(n), rng);
    ens.trees.push_back(builder.build(std::move(rows)));
  }
  return ens;
}

// Edges f -> g for every internal node splitting on f whose child is an
// internal node splitting on g, unioned over the ensemble. Vertices are the
// features used in any split.
inline FeatureGraph tree_feature_graph(const DecisionTree& tree, std::size_t p) {
  NodeSet vertices;
  for (const auto& n : tree.nodes)
    if (!n.is_leaf()) vertices.insert(static_cast<std::size_t>(n.feature));
  auto g = FeatureGraph::with_vertices(p, Directedness::directed, std::move(vertices));
  for (const auto& n : tree.nodes) {
    if (n.is_leaf()) continue;
    for (int c : {n.left, n.right}) {
      const auto& child = tree.nodes[static_cast<std::size_t>(c)];
      if (!child.is_leaf())
        g.add_edge(static_cast<std::size_t>(n.feature), static_cast<std::size_t>(child.feature));
    }
  }
  return g;
}

inline FeatureGraph extract_feature_graph(const TreeEnsemble& ens, std::size_t p) {
  if (ens.trees.empty()) throw Error("extract_feature_graph: empty ensemble");
  std::vector<FeatureGraph> graphs;
  graphs.reserve(ens.trees.size());
  for (const auto& t : ens.trees) graphs.push_back(tree_feature_graph(t, p));
  return merge_graphs(graphs);
}

// Mean split gain per feature; unused features score 0.
inline std::vector<double> ensemble_gain_importance(const TreeEnsemble& ens) {
  if (ens.kind != EnsembleKind::boosted)
    throw Error("gain importance is defined for boosted ensembles");
  std::vector<double> sum(ens.feature_count, 0.0);
  std::vector<std::size_t> uses(ens.feature_count, 0);
  for (const auto& t : ens.trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) {
        sum[static_cast<std::size_t>(n.feature)] += n.gain;
        ++uses[static_cast<std::size_t>(n.feature)];
      }
  for (std::size_t f = 0; f < sum.size(); ++f)
    if (uses[f]) sum[f] /= static_cast<double>(uses[f]);
  return sum;
}

// Mean decrease in impurity: per-tree sums of weighted decreases, averaged
// over trees.
inline std::vector<double> forest_gini_importance(const TreeEnsemble& ens) {
  if (ens.kind != EnsembleKind::forest)
    throw Error("Gini importance is defined for forest ensembles");
  std::vector<double> score(ens.feature_count, 0.0);
  for (const auto& t : ens.trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) score[static_cast<std::size_t>(n.feature)] += n.gain;
  for (auto& s : score) s /= static_cast<double>(ens.trees.size());
  return score;
}

}  // namespace enggnn
