#pragma once

// The dual-graph model: one masked branch over the external undirected
// graph, one over the tree-generated directed graph, their last hidden
// layers concatenated (external first) into a small dense head with a
// softmax output. Also the single-branch and tree baselines, connection
// weight importance and checkpoint IO.

#include "enggnn/graph.hpp"
#include "enggnn/metrics.hpp"
#include "enggnn/nn.hpp"
#include "enggnn/trees.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace enggnn {

// Branch widths after the p-wide masked layer, and the head's hidden width.
struct ModelHyper {
  std::vector<int> branch_hidden{64, 16};
  int head_hidden = 16;
};

// [masked or dense p -> p] -> hidden... all ReLU. `mask` empty => dense.
inline std::vector<Layer> make_branch_layers(std::size_t p, const Matrix* mask,
                                             const ModelHyper& hyper, Rng& rng) {
  std::vector<Layer> layers;
  const auto pp = static_cast<Eigen::Index>(p);
  if (mask) {
    if (mask->rows() != pp || mask->cols() != pp) throw Error("mask must be p x p");
    layers.push_back(make_masked_layer(*mask, Activation::relu, rng));
  } else {
    layers.push_back(make_dense_layer(pp, pp, Activation::relu, rng));
  }
  Eigen::Index in = pp;
  for (int w : hyper.branch_hidden) {
    if (w < 1) throw Error("hidden widths must be positive");
    layers.push_back(make_dense_layer(in, w, Activation::relu, rng));
    in = w;
  }
  return layers;
}

class EnggnnModel {
 public:
  struct Cache {
    NetworkCache e, g, head;
  };
  struct Grads {
    Gradients e, g, head;
  };
  struct Optimizer {
    AdamState e, g, head;
  };

  EnggnnModel() = default;
  EnggnnModel(Network branch_e, Network branch_g, Network head)
      : branch_e_(std::move(branch_e)), branch_g_(std::move(branch_g)), head_(std::move(head)) {
    if (branch_e_.in_dim() != branch_g_.in_dim()) throw Error("branches disagree on p");
    if (branch_e_.out_dim() + branch_g_.out_dim() != head_.in_dim())
      throw Error("head input width must equal the concatenated branch widths");
    if (head_.layers().back().activation != Activation::softmax)
      throw Error("head must end in softmax");
  }

  const Network& branch_e() const { return branch_e_; }
  const Network& branch_g() const { return branch_g_; }
  const Network& head() const { return head_; }
  Network& branch_e() { return branch_e_; }
  Network& branch_g() { return branch_g_; }
  Network& head() { return head_; }
  Eigen::Index feature_count() const { return branch_e_.in_dim(); }

  // H_C = [H_e | H_g]
  Matrix head_input(const Matrix& x, const ForwardOptions& opt = {}, Cache* cache = nullptr) const {
    const Matrix he = branch_e_.forward(x, opt, cache ? &cache->e : nullptr);
    const Matrix hg = branch_g_.forward(x, opt, cache ? &cache->g : nullptr);
    Matrix hc(x.rows(), he.cols() + hg.cols());
    hc << he, hg;
    return hc;
  }

  Matrix forward(const Matrix& x, const ForwardOptions& opt, Cache* cache) const {
    const Matrix hc = head_input(x, opt, cache);
    return head_.forward(hc, opt, cache ? &cache->head : nullptr);
  }

  Matrix predict(const Matrix& x) const { return forward(x, ForwardOptions{}, nullptr); }

  Grads backward(const Cache& cache, const Matrix& dlogits) const {
    Grads g;
    Matrix dhc;
    g.head = head_.backward(cache.head, dlogits, &dhc);
    const auto we = branch_e_.out_dim();
    g.e = branch_e_.backward(cache.e, dhc.leftCols(we));
    g.g = branch_g_.backward(cache.g, dhc.rightCols(dhc.cols() - we));
    return g;
  }

  Optimizer make_optimizer() const {
    return {branch_e_.make_optimizer(), branch_g_.make_optimizer(), head_.make_optimizer()};
  }

  void apply(const Grads& g, Optimizer& opt, double lr) {
    branch_e_.apply(g.e, opt.e, lr);
    branch_g_.apply(g.g, opt.g, lr);
    head_.apply(g.head, opt.head, lr);
  }

 private:
  Network branch_e_, branch_g_, head_;
};

// Parameters are drawn from one stream in the order branch_e, branch_g, head.
inline EnggnnModel build_enggnn(const FeatureGraph& external, const FeatureGraph& generated,
                                const ModelHyper& hyper, std::uint64_t seed) {
  if (external.node_count() != generated.node_count())
    throw Error("build_enggnn: graphs have different node counts (" +
                std::to_string(external.node_count()) + " vs " +
                std::to_string(generated.node_count()) + ")");
  if (external.directed()) throw Error("build_enggnn: external graph must be undirected");
  if (!generated.directed()) throw Error("build_enggnn: generated graph must be directed");
  if (hyper.branch_hidden.empty()) throw Error("build_enggnn: branches need hidden layers");
  const std::size_t p = external.node_count();
  Rng rng(seed);
  const Matrix mask_e = add_self_loops(external);
  const Matrix mask_g = add_self_loops(generated);
  Network be(make_branch_layers(p, &mask_e, hyper, rng));
  Network bg(make_branch_layers(p, &mask_g, hyper, rng));
  const Eigen::Index concat = be.out_dim() + bg.out_dim();
  std::vector<Layer> head;
  head.push_back(make_dense_layer(concat, hyper.head_hidden, Activation::relu, rng));
  head.push_back(make_dense_layer(hyper.head_hidden, 2, Activation::softmax, rng));
  return EnggnnModel(std::move(be), std::move(bg), Network(std::move(head)));
}

// Single-branch GEDFN (mask given) or DFN (mask null): branch + softmax.
inline Network build_single_branch(std::size_t p, const Matrix* mask, const ModelHyper& hyper,
                                   std::uint64_t seed) {
  Rng rng(seed);
  auto layers = make_branch_layers(p, mask, hyper, rng);
  const auto last = layers.back().out_dim();
  layers.push_back(make_dense_layer(last, 2, Activation::softmax, rng));
  return Network(std::move(layers));
}

// ---------------------------------------------------------------------------
// Importance

struct ImportanceRanking {
  std::vector<double> scores;      // raw, >= 0
  std::vector<double> percentile;  // average-rank / p

  static ImportanceRanking from_scores(std::vector<double> s) {
    ImportanceRanking r;
    r.percentile = percentile_rank(s);
    r.scores = std::move(s);
    return r;
  }
};

// For feature j: sum_u |W(j,u)| over row j plus sum_v |W(v,j)| over column j,
// restricted to unmasked entries. The diagonal entry appears in both sums.
// A dense layer counts every entry.
inline std::vector<double> connection_weight_scores(const Layer& first) {
  if (first.in_dim() != first.out_dim())
    throw Error("connection weights need a square first layer");
  const auto p = first.in_dim();
  const Matrix w = first.mask ? Matrix(first.weight.cwiseProduct(*first.mask)) : first.weight;
  const Matrix a = w.cwiseAbs();
  std::vector<double> s(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) s[static_cast<std::size_t>(j)] = a.row(j).sum() + a.col(j).sum();
  return s;
}

inline ImportanceRanking graph_connection_importance(const EnggnnModel& model) {
  auto e = connection_weight_scores(model.branch_e().layers().front());
  const auto g = connection_weight_scores(model.branch_g().layers().front());
  for (std::size_t j = 0; j < e.size(); ++j) e[j] += g[j];
  return ImportanceRanking::from_scores(std::move(e));
}

inline ImportanceRanking graph_connection_importance(const Network& single_branch) {
  return ImportanceRanking::from_scores(connection_weight_scores(single_branch.layers().front()));
}

// ---------------------------------------------------------------------------
// Model roster

enum class ModelKind { enggnn, gedfn_e, gedfn_xgb, gedfn_rf, dfn, gbt, rf };

inline constexpr std::array<ModelKind, 7> kAllModelKinds{
    ModelKind::enggnn, ModelKind::gedfn_xgb, ModelKind::gedfn_rf, ModelKind::gedfn_e,
    ModelKind::dfn,    ModelKind::gbt,       ModelKind::rf};

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::enggnn: return "enggnn";
    case ModelKind::gedfn_e: return "gedfn_e";
    case ModelKind::gedfn_xgb: return "gedfn_xgb";
    case ModelKind::gedfn_rf: return "gedfn_rf";
    case ModelKind::dfn: return "dfn";
    case ModelKind::gbt: return "gbt";
    case ModelKind::rf: return "rf";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  for (auto k : kAllModelKinds)
    if (to_string(k) == s) return k;
  throw Error("unknown model kind '" + s + "'");
}

inline bool is_neural(ModelKind k) { return k != ModelKind::gbt && k != ModelKind::rf; }

using AnyModel = std::variant<EnggnnModel, Network, TreeEnsemble>;

struct BaselineInputs {
  std::size_t p = 0;
  const FeatureGraph* external = nullptr;   // gedfn_e
  const FeatureGraph* generated = nullptr;  // gedfn_xgb, gedfn_rf
  const Matrix* x = nullptr;                // gbt, rf
  const Labels* y = nullptr;
  ModelHyper hyper;
  BoostParams boost;
  ForestParams forest;
  std::uint64_t seed = 0;
};

// Neural baselines come back initialized and untrained; tree baselines are
// fitted on inputs.x / inputs.y.
inline AnyModel build_baseline(ModelKind kind, const BaselineInputs& in) {
  auto need = [&](const FeatureGraph* g, const char* what) -> const FeatureGraph& {
    if (!g) throw Error(to_string(kind) + " needs the " + what + " graph");
    if (g->node_count() != in.p) throw Error(to_string(kind) + ": graph size != p");
    return *g;
  };
  switch (kind) {
    case ModelKind::enggnn:
      return build_enggnn(need(in.external, "external"), need(in.generated, "generated"),
                          in.hyper, in.seed);
    case ModelKind::gedfn_e: {
      const Matrix mask = add_self_loops(need(in.external, "external"));
      return build_single_branch(in.p, &mask, in.hyper, in.seed);
    }
    case ModelKind::gedfn_xgb:
    case ModelKind::gedfn_rf: {
      const Matrix mask = add_self_loops(need(in.generated, "generated"));
      return build_single_branch(in.p, &mask, in.hyper, in.seed);
    }
    case ModelKind::dfn:
      return build_single_branch(in.p, nullptr, in.hyper, in.seed);
    case ModelKind::gbt:
    case ModelKind::rf: {
      if (!in.x || !in.y) throw Error(to_string(kind) + " needs training data");
      if (kind == ModelKind::gbt) return fit_gradient_boosted_trees(*in.x, *in.y, in.boost);
      ForestParams fp = in.forest;
      fp.seed = in.seed;
      return fit_random_forest(*in.x, *in.y, fp);
    }
  }
  throw Error("unreachable model kind");
}

// P(y = 1) per row.
inline Vector predict_positive(const AnyModel& m, const Matrix& x) {
  return std::visit(
      [&](const auto& model) -> Vector {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, TreeEnsemble>) {
          return model.predict_proba(x);
        } else {
          return model.forward(x, ForwardOptions{}, nullptr).col(1);
        }
      },
      m);
}

inline ImportanceRanking model_importance(const AnyModel& m) {
  return std::visit(
      [](const auto& model) -> ImportanceRanking {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, TreeEnsemble>) {
          return ImportanceRanking::from_scores(model.kind == EnsembleKind::boosted
                                                    ? ensemble_gain_importance(model)
                                                    : forest_gini_importance(model));
        } else {
          return graph_connection_importance(model);
        }
      },
      m);
}

// ---------------------------------------------------------------------------
// Checkpoints: line-oriented text, every real written with 17 significant
// digits so a write/read cycle is bit-exact. Masks are stored as the list of
// (row, col) positions equal to 1.

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string fmt_real(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline void write_network(std::ostream& os, const std::string& name, const Network& net) {
  os << "network " << name << ' ' << net.layers().size() << '\n';
  for (const auto& l : net.layers()) {
    os << "layer " << l.in_dim() << ' ' << l.out_dim() << ' ' << to_string(l.activation) << ' '
       << (l.mask ? "masked" : "dense") << '\n';
    if (l.mask) {
      std::vector<std::pair<Eigen::Index, Eigen::Index>> on;
      for (Eigen::Index i = 0; i < l.mask->rows(); ++i)
        for (Eigen::Index j = 0; j < l.mask->cols(); ++j)
          if ((*l.mask)(i, j) != 0.0) on.emplace_back(i, j);
      os << "mask_edges " << on.size() << '\n';
      for (const auto& [i, j] : on) os << i << ' ' << j << '\n';
    }
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
        os << (j ? " " : "") << fmt_real(l.weight(i, j));
      os << '\n';
    }
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) os << (j ? " " : "") << fmt_real(l.bias(j));
    os << '\n';
  }
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string s;
    if (!(is_ >> s)) throw Error("checkpoint: unexpected end of file");
    return s;
  }
  void expect(const std::string& w) {
    const auto got = word();
    if (got != w) throw Error("checkpoint: expected '" + w + "', found '" + got + "'");
  }
  long integer() {
    const auto s = word();
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw Error("checkpoint: bad integer '" + s + "'");
    return v;
  }
  double real() {
    const auto s = word();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw Error("checkpoint: bad number '" + s + "'");
    return v;
  }
  std::string line() {
    std::string s;
    std::getline(is_ >> std::ws, s);
    return s;
  }

 private:
  std::istream& is_;
};

inline Network read_network(TokenReader& in, const std::string& name) {
  in.expect("network");
  in.expect(name);
  const long count = in.integer();
  std::vector<Layer> layers;
  for (long k = 0; k < count; ++k) {
    in.expect("layer");
    const long rows = in.integer(), cols = in.integer();
    if (rows < 1 || cols < 1) throw Error("checkpoint: bad layer shape");
    Layer l;
    l.activation = activation_from_string(in.word());
    const auto type = in.word();
    if (type == "masked") {
      in.expect("mask_edges");
      const long ne = in.integer();
      Matrix mask = Matrix::Zero(rows, cols);
      for (long e = 0; e < ne; ++e) {
        const long i = in.integer(), j = in.integer();
        if (i < 0 || i >= rows || j < 0 || j >= cols) throw Error("checkpoint: mask edge out of range");
        mask(i, j) = 1.0;
      }
      l.mask = std::move(mask);
    } else if (type != "dense") {
      throw Error("checkpoint: unknown layer type '" + type + "'");
    }
    l.weight.resize(rows, cols);
    for (long i = 0; i < rows; ++i)
      for (long j = 0; j < cols; ++j) l.weight(i, j) = in.real();
    l.bias.resize(cols);
    for (long j = 0; j < cols; ++j) l.bias(j) = in.real();
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

}  // namespace detail

struct Checkpoint {
  ModelKind kind = ModelKind::enggnn;
  std::vector<std::string> feature_names;  // may be empty
  AnyModel model;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "enggnn-checkpoint " << kCheckpointVersion << '\n';
  os << "kind " << to_string(ck.kind) << '\n';
  os << "names " << ck.feature_names.size() << '\n';
  for (const auto& n : ck.feature_names) os << n << '\n';
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, EnggnnModel>) {
          os << "model enggnn\n";
          detail::write_network(os, "branch_e", m.branch_e());
          detail::write_network(os, "branch_g", m.branch_g());
          detail::write_network(os, "head", m.head());
        } else if constexpr (std::is_same_v<T, Network>) {
          os << "model network\n";
          detail::write_network(os, "net", m);
        } else {
          os << "model trees " << (m.kind == EnsembleKind::boosted ? "boosted" : "forest") << ' '
             << m.feature_count << ' ' << detail::fmt_real(m.base_score) << ' '
             << detail::fmt_real(m.shrinkage) << ' ' << m.trees.size() << '\n';
          for (const auto& t : m.trees) {
            os << "tree " << t.nodes.size() << '\n';
            for (const auto& n : t.nodes)
              os << n.feature << ' ' << detail::fmt_real(n.threshold) << ' ' << n.left << ' '
                 << n.right << ' ' << detail::fmt_real(n.value) << ' ' << detail::fmt_real(n.gain)
                 << ' ' << detail::fmt_real(n.weight) << '\n';
          }
        }
      },
      ck.model);
  os << "end\n";
}

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::TokenReader in(is);
  in.expect("enggnn-checkpoint");
  const long version = in.integer();
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  in.expect("kind");
  ck.kind = model_kind_from_string(in.word());
  in.expect("names");
  const long nn = in.integer();
  for (long i = 0; i < nn; ++i) ck.feature_names.push_back(in.line());
  in.expect("model");
  const auto type = in.word();
  if (type == "enggnn") {
    Network be = detail::read_network(in, "branch_e");
    Network bg = detail::read_network(in, "branch_g");
    Network head = detail::read_network(in, "head");
    ck.model = EnggnnModel(std::move(be), std::move(bg), std::move(head));
  } else if (type == "network") {
    ck.model = detail::read_network(in, "net");
  } else if (type == "trees") {
    TreeEnsemble ens;
    const auto k = in.word();
    if (k != "boosted" && k != "forest") throw Error("checkpoint: bad ensemble kind '" + k + "'");
    ens.kind = k == "boosted" ? EnsembleKind::boosted : EnsembleKind::forest;
    ens.feature_count = static_cast<std::size_t>(in.integer());
    ens.base_score = in.real();
    ens.shrinkage = in.real();
    const long nt = in.integer();
    for (long t = 0; t < nt; ++t) {
      in.expect("tree");
      const long nodes = in.integer();
      DecisionTree tree;
      for (long i = 0; i < nodes; ++i) {
        TreeNode n;
        n.feature = static_cast<int>(in.integer());
        n.threshold = in.real();
        n.left = static_cast<int>(in.integer());
        n.right = static_cast<int>(in.integer());
        n.value = in.real();
        n.gain = in.real();
        n.weight = in.real();
        if (!n.is_leaf() && (n.left <= i || n.right <= i || n.left >= nodes || n.right >= nodes))
          throw Error("checkpoint: bad child index in tree " + std::to_string(t));
        tree.nodes.push_back(n);
      }
      ens.trees.push_back(std::move(tree));
    }
    ck.model = std::move(ens);
  } else {
    throw Error("checkpoint: unknown model type '" + type + "'");
  }
  in.expect("end");
  if (!ck.feature_names.empty()) {
    const auto p = std::visit(
        [](const auto& m) -> std::size_t {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, TreeEnsemble>) {
            return m.feature_count;
          } else if constexpr (std::is_same_v<T, EnggnnModel>) {
            return static_cast<std::size_t>(m.feature_count());
          } else {
            return static_cast<std::size_t>(m.in_dim());
          }
        },
        ck.model);
    if (p != ck.feature_names.size()) throw Error("checkpoint: name count != feature count");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write checkpoint '" + path + "'");
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace enggnn
