#pragma once

// Synthetic benchmark: scale-free feature graph, structural covariance
// (I - A*)^-1 (I - A*)^-T, multivariate normal features, centrality-stratified
// true features expanded by one hop, and a thresholded nonlinear outcome.

#include "enggnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

namespace enggnn {

// How g is compared against the threshold s.
//   rescale:  g is min-max rescaled to [0,1], y = 1[g~ > s]
//   quantile: y = 1[g > s-quantile of g]
enum class ThresholdRule { rescale, quantile };

inline std::string to_string(ThresholdRule r) {
  return r == ThresholdRule::rescale ? "rescale" : "quantile";
}

inline ThresholdRule threshold_rule_from_string(const std::string& s) {
  if (s == "rescale") return ThresholdRule::rescale;
  if (s == "quantile") return ThresholdRule::quantile;
  throw Error("unknown threshold rule '" + s + "'");
}

struct SimScenario {
  std::size_t n = 5000;
  double p_n = 0.05;  // p / n
  double p_t = 0.05;  // t / p
  std::size_t ba_m = 2;
  std::uint64_t seed = 0;
  long t_override = -1;  // >= 0 replaces round(p_t * p)
  ThresholdRule rule = ThresholdRule::quantile;
  double threshold = 0.6;

  std::size_t p() const {
    return static_cast<std::size_t>(std::llround(p_n * static_cast<double>(n)));
  }
  std::size_t t() const {
    if (t_override >= 0) return static_cast<std::size_t>(t_override);
    return static_cast<std::size_t>(std::llround(p_t * static_cast<double>(p())));
  }

  void validate() const {
    if (n < 2) throw Error("scenario: n must be >= 2");
    if (!(p_n > 0.0)) throw Error("scenario: p_n must be > 0");
    if (!(p_t >= 0.0 && p_t <= 1.0)) throw Error("scenario: p_t must lie in [0, 1]");
    if (p() < 2) throw Error("scenario: p = round(p_n * n) must be >= 2");
    if (ba_m < 1 || ba_m >= p()) throw Error("scenario: need 1 <= ba_m < p");
    if (t() > p()) throw Error("scenario: t exceeds p");
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error("scenario: threshold must lie in (0, 1)");
  }
};

struct SimDataset {
  Matrix x;
  Labels y;
  FeatureGraph graph;
  NodeSet core;
  NodeSet important;
  double beta0 = 0.0;
  std::vector<double> beta;  // aligned with `important` in ascending order
  Vector mean;
  std::vector<std::string> names;
  int outcome_attempts = 1;

  // 1 if the feature is in the important set, else 0.
  Labels truth() const {
    Labels t(static_cast<std::size_t>(x.cols()), 0);
    for (auto j : important) t[j] = 1;
    return t;
  }
};

inline std::vector<std::string> default_feature_names(std::size_t p) {
  const int width = static_cast<int>(std::to_string(p).size());
  std::vector<std::string> names;
  names.reserve(p);
  char buf[32];
  for (std::size_t j = 0; j < p; ++j) {
    std::snprintf(buf, sizeof buf, "f%0*zu", width, j);
    names.emplace_back(buf);
  }
  return names;
}

// A*(max(u,v), min(u,v)) ~ U[0.1, 10] per undirected edge, else 0. Edges are
// visited in ascending (u, v) order.
inline Matrix weighted_adjacency(const Matrix& a, Rng& rng) {
  if (a.rows() != a.cols()) throw Error("weighted_adjacency: adjacency must be square");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a(i, i) != 0.0) throw Error("weighted_adjacency: diagonal must be zero");
    for (Eigen::Index j = 0; j < i; ++j)
      if (a(i, j) != a(j, i)) throw Error("weighted_adjacency: adjacency must be symmetric");
  }
  Matrix w = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index u = 0; u < a.rows(); ++u)
    for (Eigen::Index v = u + 1; v < a.cols(); ++v)
      if (a(u, v) != 0.0) w(v, u) = uniform(rng, 0.1, 10.0);
  return w;
}

inline Matrix weighted_adjacency(const FeatureGraph& g, Rng& rng) {
  if (g.directed()) throw Error("weighted_adjacency expects an undirected graph");
  return weighted_adjacency(g.adjacency(), rng);
}

// (I - A*)^-1 (I - A*)^-T with Sigma_eps = I.
inline Matrix structural_factor(const Matrix& weighted) {
  const auto p = weighted.rows();
  const Matrix sys = Matrix::Identity(p, p) - weighted;
  const bool lower = weighted.triangularView<Eigen::Upper>().toDenseMatrix().cwiseAbs().sum() == 0.0;
  if (lower) {
    // unit lower-triangular, always invertible
    return sys.triangularView<Eigen::UnitLower>().solve(Matrix::Identity(p, p));
  }
  Eigen::FullPivLU<Matrix> lu(sys);
  if (!lu.isInvertible()) throw Error("feature_covariance: I - A* is singular");
  return lu.inverse();
}

inline Matrix feature_covariance(const Matrix& weighted) {
  if (weighted.rows() != weighted.cols()) throw Error("feature_covariance: A* must be square");
  const Matrix m = structural_factor(weighted);
  Matrix s = m * m.transpose();
  // exact symmetry regardless of summation order
  s = (0.5 * (s + s.transpose())).eval();
  return s;
}

inline std::string format_jitter(double j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", j);
  return buf;
}

struct CholeskyResult {
  Matrix lower;
  double jitter = 0.0;  // relative to each diagonal entry
};

// Cholesky of Sigma on the correlation scale: Sigma = D^1/2 C D^1/2 with
// C + jitter*I factorized, trying jitter = 0, 1e-12, ..., 1e-8. The result
// satisfies L L^T = Sigma + jitter * diag(Sigma).
inline CholeskyResult cholesky_with_jitter(const Matrix& sigma, double max_jitter = 1e-8) {
  if (sigma.rows() != sigma.cols()) throw Error("cholesky: matrix must be square");
  const auto p = sigma.rows();
  Vector scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(sigma(j, j) > 0.0) || !std::isfinite(sigma(j, j)))
      throw Error("cholesky: non-positive diagonal entry at " + std::to_string(j));
    scale(j) = std::sqrt(sigma(j, j));
  }
  const Vector inv = scale.cwiseInverse();
  const Matrix corr = inv.asDiagonal() * sigma * inv.asDiagonal();
  for (double jitter = 0.0; jitter <= max_jitter * (1.0 + 1e-12);
       jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0) {
    Matrix c = corr;
    c.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(c);
    if (llt.info() == Eigen::Success) {
      CholeskyResult r;
      r.lower = scale.asDiagonal() * Matrix(llt.matrixL());
      r.jitter = jitter;
      return r;
    }
  }
  throw Error("cholesky: factorization failed with jitter up to " + format_jitter(max_jitter));
}

struct FeatureSample {
  Matrix x;
  Vector mean;
};

// mu_j ~ U[7, 13] once, then rows mu + z L^T with z standard normal.
inline FeatureSample sample_features(const Matrix& sigma, std::size_t n, Rng& rng) {
  const auto chol = cholesky_with_jitter(sigma);
  if (chol.jitter > 0.0) warn("sample_features: covariance needed relative jitter " + format_jitter(chol.jitter));
  const auto p = sigma.rows();
  FeatureSample s;
  s.mean.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) s.mean(j) = uniform(rng, 7.0, 13.0);
  Matrix z(static_cast<Eigen::Index>(n), p);
  NormalSampler normal;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = normal(rng);
  s.x = z * chol.lower.transpose();
  s.x.rowwise() += s.mean.transpose();
  return s;
}

// Nodes ordered by descending closeness, ties by ascending index.
inline std::vector<std::size_t> centrality_order(const FeatureGraph& g) {
  const auto c = closeness_centrality(g);
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] > c[b]; });
  return order;
}

struct TrueFeatures {
  NodeSet core;
  NodeSet important;
};

namespace detail {

// k distinct draws from pool (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                           std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(k);
  return pool;
}

}  // namespace detail

// ceil(0.8 t) core features from the top half by closeness, the rest from
// the bottom half; then the one-hop neighbourhood is added.
inline TrueFeatures select_true_features(const FeatureGraph& g, std::size_t t, Rng& rng) {
  const std::size_t p = g.node_count();
  if (t > p) throw Error("select_true_features: t exceeds p");
  TrueFeatures out;
  if (t == 0) return out;
  const auto order = centrality_order(g);
  const std::size_t cut = (p + 1) / 2;
  std::vector<std::size_t> high(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> low(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
  std::size_t from_high = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(t) - 1e-9));
  std::size_t from_low = t - from_high;
  if (from_high > high.size()) {
    warn("select_true_features: high-centrality stratum too small; drawing the rest from the low stratum");
    from_low += from_high - high.size();
    from_high = high.size();
  }
  if (from_low > low.size()) {
    warn("select_true_features: low-centrality stratum too small; drawing the rest from the high stratum");
    from_high += from_low - low.size();
    from_low = low.size();
  }
  for (auto v : detail::sample_without_replacement(high, from_high, rng)) out.core.insert(v);
  for (auto v : detail::sample_without_replacement(low, from_low, rng)) out.core.insert(v);
  out.important = one_hop_expand(g, out.core);
  return out;
}

struct Outcome {
  Labels y;
  double beta0 = 0.0;
  std::vector<double> beta;
  int attempts = 0;
};

// Type-7 (linear interpolation) sample quantile.
inline double sample_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// l = beta0 + x beta, phi = minmax(l), g = exp(phi) + phi^2, then threshold.
inline Labels threshold_outcome(const Vector& linear, ThresholdRule rule, double s) {
  const double lo = linear.minCoeff(), hi = linear.maxCoeff();
  if (!(hi > lo)) return {};
  std::vector<double> g(static_cast<std::size_t>(linear.size()));
  for (Eigen::Index i = 0; i < linear.size(); ++i) {
    const double phi = (linear(i) - lo) / (hi - lo);
    g[static_cast<std::size_t>(i)] = std::exp(phi) + phi * phi;
  }
  Labels y(g.size());
  if (rule == ThresholdRule::rescale) {
    const auto [mn, mx] = std::minmax_element(g.begin(), g.end());
    const double glo = *mn, ghi = *mx;
    for (std::size_t i = 0; i < g.size(); ++i) y[i] = (g[i] - glo) / (ghi - glo) > s ? 1 : 0;
  } else {
    const double cut = sample_quantile(g, s);
    for (std::size_t i = 0; i < g.size(); ++i) y[i] = g[i] > cut ? 1 : 0;
  }
  return y;
}

// beta0 ~ N(-5, 25) scalar, beta_j ~ U[-5, 5]; redrawn (at most 20 times)
// while the linear predictor is constant or y has one class.
inline Outcome generate_outcome(const Matrix& x_important, Rng& rng,
                                ThresholdRule rule = ThresholdRule::quantile, double s = 0.6) {
  if (x_important.cols() == 0) throw Error("generate_outcome: important set is empty");
  if (x_important.rows() < 2) throw Error("generate_outcome: need at least 2 samples");
  NormalSampler normal;
  for (int attempt = 1; attempt <= 20; ++attempt) {
    Outcome o;
    o.attempts = attempt;
    o.beta0 = -5.0 + 5.0 * normal(rng);
    Vector beta(x_important.cols());
    for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = uniform(rng, -5.0, 5.0);
    const Vector linear = (x_important * beta).array() + o.beta0;
    o.y = threshold_outcome(linear, rule, s);
    if (o.y.empty()) continue;
    const auto pos = std::count(o.y.begin(), o.y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(o.y.size())) continue;
    o.beta.assign(beta.data(), beta.data() + beta.size());
    return o;
  }
  throw Error("generate_outcome: no two-class outcome after 20 attempts");
}

// One stream drives graph -> weights -> features -> true set -> outcome.
inline SimDataset build_scenario(const SimScenario& sc) {
  sc.validate();
  Rng rng(sc.seed);
  const std::size_t p = sc.p();
  SimDataset d;
  d.graph = generate_ba_graph(p, sc.ba_m, rng);
  d.names = default_feature_names(p);
  d.graph.set_names(d.names);
  const Matrix weighted = weighted_adjacency(d.graph, rng);
  const Matrix sigma = feature_covariance(weighted);
  auto sample = sample_features(sigma, sc.n, rng);
  d.x = std::move(sample.x);
  d.mean = std::move(sample.mean);
  auto truth = select_true_features(d.graph, sc.t(), rng);
  d.core = std::move(truth.core);
  d.important = std::move(truth.important);
  if (d.important.empty()) throw Error("build_scenario: t = 0 leaves no important features");
  std::vector<std::size_t> cols(d.important.begin(), d.important.end());
  Matrix ximp(d.x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    ximp.col(static_cast<Eigen::Index>(k)) = d.x.col(static_cast<Eigen::Index>(cols[k]));
  auto outcome = generate_outcome(ximp, rng, sc.rule, sc.threshold);
  d.y = std::move(outcome.y);
  d.beta0 = outcome.beta0;
  d.beta = std::move(outcome.beta);
  d.outcome_attempts = outcome.attempts;
  return d;
}

}  // namespace enggnn
