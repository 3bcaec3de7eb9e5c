#pragma once

#include "enggnn/common.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace enggnn {

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

struct ClassificationScores {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline ConfusionCounts confusion_counts(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw Error("confusion: length mismatch");
  if (y_true.empty()) throw Error("confusion: empty input");
  ConfusionCounts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1))
      throw Error("confusion: non-binary value at index " + std::to_string(i));
    if (t == 1 && p == 1) ++c.tp;
    else if (t == 0 && p == 0) ++c.tn;
    else if (t == 0) ++c.fp;
    else ++c.fn;
  }
  return c;
}

// Zero denominators give 0, never NaN.
inline ClassificationScores confusion_metrics(const ConfusionCounts& c) {
  ClassificationScores s;
  auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
  s.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
  s.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  s.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  return s;
}

inline ClassificationScores confusion_metrics(std::span<const int> y_true,
                                              std::span<const int> y_pred) {
  return confusion_metrics(confusion_counts(y_true, y_pred));
}

namespace detail {

// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  std::vector<double> r(s.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && s[idx[j + 1]] == s[idx[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline void check_scores(std::span<const double> scores, std::span<const int> y) {
  if (scores.size() != y.size()) throw Error("scores and labels differ in length");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) throw Error("non-binary label at index " + std::to_string(i));
    if (std::isnan(scores[i])) throw Error("NaN score at index " + std::to_string(i));
  }
}

}  // namespace detail

// Mann-Whitney AUC; ties count one half.
inline double roc_auc(std::span<const double> scores, std::span<const int> y) {
  detail::check_scores(scores, y);
  const auto pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double neg = static_cast<double>(y.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw Error("roc_auc: both classes must be present");
  const auto ranks = detail::average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == 1) rank_sum += ranks[i];
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

// Step-wise average precision over descending score thresholds; tied scores
// form one block.
inline double pr_auc(std::span<const double> scores, std::span<const int> y) {
  detail::check_scores(scores, y);
  const auto pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  if (pos == 0.0) throw Error("pr_auc: no positive labels");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0.0, seen = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += y[idx[j]];
      seen += 1.0;
      ++j;
    }
    const double recall = tp / pos;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
    i = j;
  }
  return ap;
}

// average-rank / p, in (0, 1].
inline std::vector<double> percentile_rank(std::span<const double> scores) {
  if (scores.empty()) throw Error("percentile_rank: empty input");
  auto r = detail::average_ranks(scores);
  const auto p = static_cast<double>(scores.size());
  for (auto& v : r) v /= p;
  return r;
}

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

inline double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample variance (n - 1).
inline double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
}

// Two-sided Welch t-test. The t tail is evaluated through the regularized
// incomplete beta: P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2).
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error("welch_t_test: each sample needs >= 2 values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = variance_of(a) / na, vb = variance_of(b) / nb;
  WelchResult r;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    if (ma == mb) {
      r.t = 0.0;
      r.df = na + nb - 2.0;
      r.p_value = 1.0;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
      r.df = na + nb - 2.0;
      r.p_value = 0.0;
    }
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const double x = r.df / (r.df + r.t * r.t);
  r.p_value = std::clamp(boost::math::ibeta(r.df / 2.0, 0.5, x), 0.0, 1.0);
  return r;
}

}  // namespace enggnn
