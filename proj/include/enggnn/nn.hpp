#pragma once

// Small deterministic feedforward engine: dense and adjacency-masked layers,
// ReLU/identity/softmax, inverted dropout, softmax cross-entropy, Adam and a
// mini-batch trainer with early stopping. Everything is double precision.

#include "enggnn/common.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace enggnn {

enum class Activation { relu, identity, softmax };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  if (s == "softmax") return Activation::softmax;
  throw Error("unknown activation '" + s + "'");
}

// weight is in_dim x out_dim; a masked layer keeps weight(u, j) == 0
// wherever mask(u, j) == 0.
struct Layer {
  Matrix weight;
  Vector bias;
  std::optional<Matrix> mask;
  Activation activation = Activation::relu;

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }
  bool masked() const { return mask.has_value(); }

  Matrix effective_weight() const {
    return mask ? Matrix(weight.cwiseProduct(*mask)) : weight;
  }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 50;
  int batch_size = 16;
  double dropout_rate = 0.2;
  int early_stop_patience = 5;
  double min_delta = 1e-5;
  std::uint64_t seed = 0;

  // learning_rate == 0 is accepted so a model can be run through the
  // trainer frozen.
  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw Error("learning_rate must be finite and >= 0");
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw Error("dropout_rate must lie in [0, 1)");
    if (early_stop_patience < 1) throw Error("early_stop_patience must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Initialization

inline double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline Layer make_dense_layer(Eigen::Index in_dim, Eigen::Index out_dim,
                              Activation act, Rng& rng) {
  Layer layer;
  layer.activation = act;
  layer.weight.resize(in_dim, out_dim);
  const double bound = glorot_bound(in_dim, out_dim);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index j = 0; j < out_dim; ++j)
    for (Eigen::Index i = 0; i < in_dim; ++i)
      layer.weight(i, j) = uniform(rng, -bound, bound);
  layer.bias = Vector::Zero(out_dim);
  return layer;
}

inline Layer make_masked_layer(const Matrix& mask, Activation act, Rng& rng) {
  if (mask.rows() != mask.cols())
    throw Error("mask must be square (p x p)");
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double m = mask.data()[i];
    if (m != 0.0 && m != 1.0) throw Error("mask entries must be 0 or 1");
  }
  Layer layer = make_dense_layer(mask.rows(), mask.cols(), act, rng);
  layer.weight = layer.weight.cwiseProduct(mask);
  layer.mask = mask;
  return layer;
}

// ---------------------------------------------------------------------------
// Z-score normalization

struct ColumnStats {
  RowVector mean;
  RowVector sd;
};

inline ColumnStats zscore_fit(const Matrix& x) {
  if (x.rows() == 0 || x.cols() == 0) throw Error("zscore_fit: empty matrix");
  ColumnStats st;
  st.mean = x.colwise().mean();
  st.sd.resize(x.cols());
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double ss = (x.col(j).array() - st.mean(j)).square().sum();
    double sd = std::sqrt(ss / denom);
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      warn("zscore: column " + std::to_string(j) +
           " is constant; SD replaced by 1");
      sd = 1.0;
    }
    st.sd(j) = sd;
  }
  return st;
}

inline Matrix zscore_apply(const Matrix& x, const ColumnStats& st) {
  if (x.cols() != st.mean.size())
    throw Error("zscore_apply: column count mismatch");
  Matrix out = x.rowwise() - st.mean;
  out.array().rowwise() /= st.sd.array();
  return out;
}

struct Standardized {
  Matrix train;
  Matrix other;
  ColumnStats stats;
};

// Statistics come from x_train only; x_other is transformed with them.
inline Standardized zscore_fit_apply(const Matrix& x_train, const Matrix& x_other) {
  if (x_other.cols() != x_train.cols())
    throw Error("zscore_fit_apply: column counts differ");
  Standardized s;
  s.stats = zscore_fit(x_train);
  s.train = zscore_apply(x_train, s.stats);
  s.other = zscore_apply(x_other, s.stats);
  return s;
}

// ---------------------------------------------------------------------------
// Forward pieces

inline void softmax_rows(Matrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double mx = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - mx).exp();
    z.row(i) /= z.row(i).sum();
  }
}

inline Matrix activate(Matrix z, Activation act) {
  switch (act) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::identity: return z;
    case Activation::softmax: softmax_rows(z); return z;
  }
  return z;
}

inline void check_finite(const Matrix& x, const char* what) {
  if (!x.allFinite()) throw Error(std::string(what) + ": non-finite value in input");
}

// Inverted-dropout keep mask: entries are 0 or 1/(1-rate).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix m(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i)
      m(i, j) = uniform(rng, 0.0, 1.0) < rate ? 0.0 : scale;
  return m;
}

// sigma(X (W .* A) + b), then dropout when training.
inline Matrix masked_dense_forward(const Matrix& x, const Layer& layer, bool training,
                                   double dropout_rate, Rng& rng) {
  if (x.cols() != layer.in_dim())
    throw Error("masked_dense_forward: input has " + std::to_string(x.cols()) +
                " columns, layer expects " + std::to_string(layer.in_dim()));
  check_finite(x, "masked_dense_forward");
  Matrix z = x * layer.effective_weight();
  z.rowwise() += layer.bias.transpose();
  Matrix a = activate(std::move(z), layer.activation);
  if (training && dropout_rate > 0.0 && layer.activation != Activation::softmax)
    a = a.cwiseProduct(dropout_mask(a.rows(), a.cols(), dropout_rate, rng));
  return a;
}

// ---------------------------------------------------------------------------
// Sequential network

struct ForwardOptions {
  bool training = false;
  double dropout_rate = 0.0;
  Rng* rng = nullptr;
  // When set, these dropout masks are reused instead of sampled; entry k
  // belongs to layer k and may be empty for "no dropout".
  const std::vector<Matrix>* fixed_dropout = nullptr;
};

struct NetworkCache {
  std::vector<Matrix> inputs;       // input of layer k
  std::vector<Matrix> activations;  // sigma(z_k) before dropout
  std::vector<Matrix> dropout;      // empty matrix when dropout was off
  Matrix output;
};

struct Gradients {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;
};

struct AdamState {
  std::vector<Matrix> m_weight, v_weight;
  std::vector<Vector> m_bias, v_bias;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Network {
 public:
  using Cache = NetworkCache;
  using Grads = Gradients;
  using Optimizer = AdamState;

  Network() = default;
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) { check_chain(); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  Eigen::Index in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  Eigen::Index out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

  void check_chain() const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      if (l.bias.size() != l.out_dim())
        throw Error("layer " + std::to_string(k) + ": bias length != out_dim");
      if (l.mask && (l.mask->rows() != l.in_dim() || l.mask->cols() != l.out_dim()))
        throw Error("layer " + std::to_string(k) + ": mask shape != weight shape");
      if (k > 0 && layers_[k - 1].out_dim() != l.in_dim())
        throw Error("layers " + std::to_string(k - 1) + " and " + std::to_string(k) +
                    " do not chain (" + std::to_string(layers_[k - 1].out_dim()) +
                    " vs " + std::to_string(l.in_dim()) + ")");
      if (l.activation == Activation::softmax && k + 1 != layers_.size())
        throw Error("softmax is only allowed on the final layer");
    }
  }

  Matrix forward(const Matrix& x, const ForwardOptions& opt, NetworkCache* cache = nullptr) const {
    if (layers_.empty()) throw Error("forward on empty network");
    if (x.cols() != in_dim())
      throw Error("network expects " + std::to_string(in_dim()) + " input columns, got " +
                  std::to_string(x.cols()));
    check_finite(x, "network forward");
    if (cache) {
      cache->inputs.assign(layers_.size(), Matrix());
      cache->activations.assign(layers_.size(), Matrix());
      cache->dropout.assign(layers_.size(), Matrix());
    }
    Matrix a = x;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const Layer& l = layers_[k];
      if (cache) cache->inputs[k] = a;
      Matrix z = a * l.effective_weight();
      z.rowwise() += l.bias.transpose();
      a = activate(std::move(z), l.activation);
      if (cache) cache->activations[k] = a;
      if (opt.training && l.activation != Activation::softmax) {
        Matrix drop;
        if (opt.fixed_dropout) {
          drop = (*opt.fixed_dropout)[k];
        } else if (opt.dropout_rate > 0.0) {
          if (!opt.rng) throw Error("training forward with dropout needs an rng");
          drop = dropout_mask(a.rows(), a.cols(), opt.dropout_rate, *opt.rng);
        }
        if (drop.size() > 0) {
          a = a.cwiseProduct(drop);
          if (cache) cache->dropout[k] = std::move(drop);
        }
      }
    }
    if (cache) cache->output = a;
    return a;
  }

  // `upstream` is dL/d(output). If the final layer is softmax it must
  // instead be dL/d(logits), i.e. the fused softmax + cross-entropy
  // gradient. Returns parameter gradients; dL/d(input) goes to `grad_input`.
  Gradients backward(const NetworkCache& cache, const Matrix& upstream,
                     Matrix* grad_input = nullptr) const {
    Gradients g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Matrix delta = upstream;
    for (std::size_t kk = layers_.size(); kk-- > 0;) {
      const Layer& l = layers_[kk];
      if (l.activation != Activation::softmax) {
        if (cache.dropout[kk].size() > 0) delta = delta.cwiseProduct(cache.dropout[kk]);
        if (l.activation == Activation::relu)
          delta = delta.cwiseProduct(
              (cache.activations[kk].array() > 0.0).cast<double>().matrix());
      }
      g.weight[kk] = cache.inputs[kk].transpose() * delta;
      if (l.mask) g.weight[kk] = g.weight[kk].cwiseProduct(*l.mask);
      g.bias[kk] = delta.colwise().sum().transpose();
      if (kk > 0 || grad_input) {
        Matrix next = delta * l.effective_weight().transpose();
        if (kk == 0) {
          *grad_input = std::move(next);
        } else {
          delta = std::move(next);
        }
      }
    }
    return g;
  }

  AdamState make_optimizer() const {
    AdamState s;
    for (const auto& l : layers_) {
      s.m_weight.push_back(Matrix::Zero(l.in_dim(), l.out_dim()));
      s.v_weight.push_back(Matrix::Zero(l.in_dim(), l.out_dim()));
      s.m_bias.push_back(Vector::Zero(l.out_dim()));
      s.v_bias.push_back(Vector::Zero(l.out_dim()));
    }
    return s;
  }

  void apply(const Gradients& g, AdamState& state, double lr);

 private:
  std::vector<Layer> layers_;
};

// Bias-corrected Adam on one parameter block.
template <class Param>
void adam_update(Param& param, const Param& grad, Param& m, Param& v, long step,
                 const AdamState& s, double lr) {
  if (param.size() != grad.size() || m.size() != param.size())
    throw Error("adam: parameter/gradient shape mismatch");
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
}

// One Adam step over every layer; masked weights are re-zeroed afterwards.
inline void adam_step(std::vector<Layer>& layers, const Gradients& g, AdamState& state,
                      double lr) {
  if (g.weight.size() != layers.size() || state.m_weight.size() != layers.size())
    throw Error("adam_step: layer count mismatch");
  ++state.step;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Layer& l = layers[k];
    adam_update(l.weight, g.weight[k], state.m_weight[k], state.v_weight[k], state.step,
                state, lr);
    adam_update(l.bias, g.bias[k], state.m_bias[k], state.v_bias[k], state.step, state, lr);
    if (l.mask) l.weight = l.weight.cwiseProduct(*l.mask);
  }
}

inline void Network::apply(const Gradients& g, AdamState& state, double lr) {
  adam_step(layers_, g, state, lr);
}

// ---------------------------------------------------------------------------
// Loss

inline constexpr double kLossClip = 1e-12;

inline void check_one_hot(const Matrix& labels) {
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index k = 0; k < labels.cols(); ++k) {
      const double v = labels(i, k);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw Error("label row " + std::to_string(i) + " is not one-hot");
  }
}

inline double cross_entropy_loss(const Matrix& probs, const Matrix& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
    throw Error("cross_entropy_loss: shape mismatch");
  if (probs.rows() == 0) throw Error("cross_entropy_loss: empty batch");
  check_one_hot(labels);
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index k = 0; k < probs.cols(); ++k)
      if (labels(i, k) != 0.0) total -= std::log(std::max(probs(i, k), kLossClip));
  return total / static_cast<double>(probs.rows());
}

// dL/dlogits for mean softmax cross-entropy.
inline Matrix softmax_cross_entropy_grad(const Matrix& probs, const Matrix& labels) {
  return (probs - labels) / static_cast<double>(probs.rows());
}

// ---------------------------------------------------------------------------
// Training

// A trainable model exposes forward/backward/optimizer hooks with its own
// cache and gradient types. Network and EnggnnModel both satisfy this.
template <class M>
concept Trainable = requires(M m, const M cm, const Matrix& x, const ForwardOptions& o) {
  typename M::Cache;
  typename M::Grads;
  typename M::Optimizer;
  { cm.forward(x, o, static_cast<typename M::Cache*>(nullptr)) } -> std::convertible_to<Matrix>;
  { cm.make_optimizer() } -> std::same_as<typename M::Optimizer>;
};

struct TrainResult {
  std::vector<double> loss_history;
  int epochs_run = 0;
  bool stopped_early = false;
};

template <class Model>
double mean_loss(const Model& model, const Matrix& x, const Matrix& y1h) {
  ForwardOptions eval;
  const Matrix probs = model.forward(x, eval, static_cast<typename Model::Cache*>(nullptr));
  return cross_entropy_loss(probs, y1h);
}

inline void check_binary(const Labels& y) {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] != 0 && y[i] != 1)
      throw Error("label at row " + std::to_string(i) + " is not binary");
}

// Mini-batch Adam on shuffled batches. The recorded loss for an epoch is the
// mean cross-entropy over the whole training set in evaluation mode after
// that epoch, so it is free of dropout noise.
template <Trainable Model>
TrainResult train(Model& model, const Matrix& x, const Labels& y, const TrainConfig& cfg) {
  cfg.validate();
  if (x.rows() == 0) throw Error("train: empty data");
  if (static_cast<std::size_t>(x.rows()) != y.size())
    throw Error("train: row count differs from label count");
  check_binary(y);
  const Matrix y1h = one_hot(y);

  Rng rng(cfg.seed);
  auto optimizer = model.make_optimizer();
  std::vector<std::size_t> order(y.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  ForwardOptions opt;
  opt.training = true;
  opt.dropout_rate = cfg.dropout_rate;
  opt.rng = &rng;
  typename Model::Cache cache;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Matrix xb = select_rows(x, rows);
      const Matrix yb = select_rows(y1h, rows);
      const Matrix probs = model.forward(xb, opt, &cache);
      const auto grads = model.backward(cache, softmax_cross_entropy_grad(probs, yb));
      model.apply(grads, optimizer, cfg.learning_rate);
    }
    const double loss = mean_loss(model, x, y1h);
    if (!std::isfinite(loss)) throw Error("train: loss diverged");
    result.loss_history.push_back(loss);
    result.epochs_run = epoch + 1;
    if (best - loss > cfg.min_delta) {
      best = loss;
      stale = 0;
    } else if (++stale >= cfg.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace enggnn
