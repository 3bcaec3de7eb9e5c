#pragma once

// Helpers shared by the unit tests and the acceptance binary. Oracles here
// are deliberately written without calling the library routine they check.

#include "enggnn/enggnn.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <set>
#include <utility>
#include <vector>

#include <unistd.h>

namespace support {

using namespace enggnn;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("enggnn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, lo, hi);
  return m;
}

// Random binary labels with both classes present.
inline Labels random_labels(std::size_t n, Rng& rng) {
  Labels y(n);
  for (auto& v : y) v = static_cast<int>(uniform_index(rng, 2));
  y[0] = 0;
  if (n > 1) y[1] = 1;
  return y;
}

inline FeatureGraph random_graph(std::size_t p, double prob, Directedness d, Rng& rng) {
  FeatureGraph g(p, d);
  for (std::size_t u = 0; u < p; ++u)
    for (std::size_t v = 0; v < p; ++v) {
      if (d == Directedness::undirected && v <= u) continue;
      if (u == v) continue;
      if (uniform(rng, 0.0, 1.0) < prob) g.add_edge(u, v);
    }
  return g;
}

inline FeatureGraph complete_graph(std::size_t p, Directedness d) {
  FeatureGraph g(p, d);
  for (std::size_t u = 0; u < p; ++u)
    for (std::size_t v = 0; v < p; ++v)
      if (u != v) g.add_edge(u, v);
  return g;
}

// Visit every scalar parameter of a network together with its gradient.
inline void for_each_param(Network& net, const Gradients& g,
                           const std::function<void(double&, double, bool)>& fn) {
  for (std::size_t k = 0; k < net.layers().size(); ++k) {
    Layer& l = net.layers()[k];
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
        fn(l.weight(i, j), g.weight[k](i, j), l.mask && (*l.mask)(i, j) == 0.0);
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) fn(l.bias(j), g.bias[k](j), false);
  }
}

// Zero-initialized biases can leave a pre-activation exactly on the ReLU
// kink (e.g. a row whose inputs are all zero), where central differences
// are one-sided. Moving the biases off zero avoids that.
inline void offset_biases(Network& net, Rng& rng) {
  for (auto& l : net.layers())
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = uniform(rng, 0.05, 0.3) * (j % 2 ? -1.0 : 1.0);
}

struct GradCheck {
  double max_rel_error = 0.0;      // |a - fd| / max(|a|, |fd|, 1e-6)
  double max_scaled_error = 0.0;   // |a - fd| / max(1, |fd|)
  std::size_t checked = 0;
  std::size_t masked_nonzero = 0;  // masked positions whose gradient is not exactly 0
};

inline void record(GradCheck& r, double analytic, double fd) {
  const double diff = std::abs(analytic - fd);
  r.max_rel_error = std::max(r.max_rel_error, diff / std::max({std::abs(analytic), std::abs(fd), 1e-6}));
  r.max_scaled_error = std::max(r.max_scaled_error, diff / std::max(1.0, std::abs(fd)));
  ++r.checked;
}

// Central differences of the mean cross-entropy, step h. Dropout (if any)
// is held fixed through `drop` so the loss is a deterministic function.
inline GradCheck check_network_gradients(Network net, const Matrix& x, const Labels& y, double h = 1e-5,
                                         const std::vector<Matrix>* drop = nullptr) {
  Rng bias_rng(7);
  offset_biases(net, bias_rng);
  ForwardOptions opt;
  if (drop) {
    opt.training = true;
    opt.fixed_dropout = drop;
  }
  const Matrix y1h = one_hot(y);
  NetworkCache cache;
  const Matrix probs = net.forward(x, opt, &cache);
  const Gradients g = net.backward(cache, softmax_cross_entropy_grad(probs, y1h));
  auto loss = [&] { return cross_entropy_loss(net.forward(x, opt, nullptr), y1h); };
  GradCheck r;
  for_each_param(net, g, [&](double& w, double analytic, bool masked) {
    if (masked) {
      if (analytic != 0.0) ++r.masked_nonzero;
      return;
    }
    const double keep = w;
    w = keep + h;
    const double up = loss();
    w = keep - h;
    const double down = loss();
    w = keep;
    record(r, analytic, (up - down) / (2.0 * h));
  });
  return r;
}

inline GradCheck check_enggnn_gradients(EnggnnModel model, const Matrix& x, const Labels& y,
                                        double h = 1e-5) {
  Rng bias_rng(7);
  offset_biases(model.branch_e(), bias_rng);
  offset_biases(model.branch_g(), bias_rng);
  offset_biases(model.head(), bias_rng);
  const Matrix y1h = one_hot(y);
  EnggnnModel::Cache cache;
  const Matrix probs = model.forward(x, ForwardOptions{}, &cache);
  const auto g = model.backward(cache, softmax_cross_entropy_grad(probs, y1h));
  auto loss = [&] { return cross_entropy_loss(model.predict(x), y1h); };
  GradCheck r;
  auto visit = [&](double& w, double analytic, bool masked) {
    if (masked) {
      if (analytic != 0.0) ++r.masked_nonzero;
      return;
    }
    const double keep = w;
    w = keep + h;
    const double up = loss();
    w = keep - h;
    const double down = loss();
    w = keep;
    record(r, analytic, (up - down) / (2.0 * h));
  };
  for_each_param(model.branch_e(), g.e, visit);
  for_each_param(model.branch_g(), g.g, visit);
  for_each_param(model.head(), g.head, visit);
  return r;
}

// Brute-force ROC-AUC: fraction of (positive, negative) pairs ordered
// correctly, ties counting one half.
inline double pairwise_auc(const std::vector<double>& s, const Labels& y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / pairs;
}

// Threshold sweep: for each distinct score c (descending), predict positive
// iff score >= c; AP = sum (R_k - R_{k-1}) P_k.
inline double sweep_average_precision(const std::vector<double>& s, const Labels& y) {
  std::vector<double> cuts(s.begin(), s.end());
  std::sort(cuts.begin(), cuts.end(), std::greater<>());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double positives = 0.0;
  for (int v : y) positives += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double c : cuts) {
    double tp = 0.0, pred = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= c) {
        pred += 1.0;
        tp += y[i];
      }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / pred);
    prev_recall = recall;
  }
  return ap;
}

// Random tree of depth <= max_depth with internal features drawn from [0, p).
inline DecisionTree random_tree(std::size_t p, int max_depth, Rng& rng) {
  DecisionTree t;
  std::function<int(int)> grow = [&](int depth) -> int {
    const int k = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    const bool leaf = depth >= max_depth || (depth > 0 && uniform(rng, 0.0, 1.0) < 0.3);
    if (leaf) {
      t.nodes[static_cast<std::size_t>(k)].value = uniform(rng, -1.0, 1.0);
      return k;
    }
    t.nodes[static_cast<std::size_t>(k)].feature = static_cast<int>(uniform_index(rng, p));
    t.nodes[static_cast<std::size_t>(k)].threshold = uniform(rng, -1.0, 1.0);
    const int l = grow(depth + 1);
    const int r = grow(depth + 1);
    t.nodes[static_cast<std::size_t>(k)].left = l;
    t.nodes[static_cast<std::size_t>(k)].right = r;
    return k;
  };
  grow(0);
  return t;
}

// Recursive traversal oracle: (parent feature, child feature) for every
// internal parent whose child is internal.
inline void traversal_edges(const DecisionTree& t, int k, std::set<std::pair<std::size_t, std::size_t>>& out,
                            std::set<std::size_t>& vertices) {
  const auto& n = t.nodes[static_cast<std::size_t>(k)];
  if (n.feature < 0) return;
  vertices.insert(static_cast<std::size_t>(n.feature));
  for (int c : {n.left, n.right}) {
    const auto& child = t.nodes[static_cast<std::size_t>(c)];
    if (child.feature >= 0)
      out.insert({static_cast<std::size_t>(n.feature), static_cast<std::size_t>(child.feature)});
    traversal_edges(t, c, out, vertices);
  }
}

// Importance evaluated term by term from the indicator form.
inline std::vector<double> literal_importance(const std::vector<std::pair<Matrix, Matrix>>& weight_and_mask) {
  const auto p = weight_and_mask.front().first.rows();
  std::vector<double> out(static_cast<std::size_t>(p), 0.0);
  for (const auto& [w, a] : weight_and_mask)
    for (Eigen::Index j = 0; j < p; ++j) {
      double row = 0.0, col = 0.0;
      for (Eigen::Index u = 0; u < p; ++u) row += std::abs(w(j, u) * (a(j, u) == 1.0 ? 1.0 : 0.0));
      for (Eigen::Index v = 0; v < p; ++v) col += std::abs(w(v, j) * (a(v, j) == 1.0 ? 1.0 : 0.0));
      out[static_cast<std::size_t>(j)] += row + col;
    }
  return out;
}

// Two-sided Student-t tail by composite Simpson quadrature of the density.
inline double t_two_sided_quadrature(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1.0 + x * x / df, -(df + 1.0) / 2.0); };
  const double a = 0.0, b = std::abs(t);
  const int n = 20000;
  const double hstep = (b - a) / n;
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += pdf(a + i * hstep) * (i % 2 ? 4.0 : 2.0);
  const double central = s * hstep / 3.0;  // P(0 < T < |t|)
  return 1.0 - 2.0 * central;
}

}  // namespace support
