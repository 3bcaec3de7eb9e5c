#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace enggnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;
using Labels = std::vector<int>;

// Every failure in the library surfaces as an Error.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Warnings go through one process-wide sink so the CLI can print them and
// tests can capture them.
class Warnings {
 public:
  using Handler = std::function<void(const std::string&)>;

  static void emit(const std::string& msg) {
    auto& self = instance();
    std::lock_guard<std::mutex> lock(self.mutex_);
    ++self.count_;
    if (self.handler_) {
      self.handler_(msg);
    } else {
      std::cerr << "warning: " << msg << '\n';
    }
  }

  static Handler set_handler(Handler h) {
    auto& self = instance();
    std::lock_guard<std::mutex> lock(self.mutex_);
    std::swap(self.handler_, h);
    return h;
  }

  static std::size_t count() {
    auto& self = instance();
    std::lock_guard<std::mutex> lock(self.mutex_);
    return self.count_;
  }

 private:
  static Warnings& instance() {
    static Warnings w;
    return w;
  }

  std::mutex mutex_;
  Handler handler_;
  std::size_t count_ = 0;
};

inline void warn(const std::string& msg) { Warnings::emit(msg); }

// RAII capture of warnings, mostly for tests.
class WarningCapture {
 public:
  WarningCapture()
      : previous_(Warnings::set_handler(
            [this](const std::string& m) { messages_.push_back(m); })) {}
  ~WarningCapture() { Warnings::set_handler(std::move(previous_)); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }

 private:
  std::vector<std::string> messages_;
  Warnings::Handler previous_;
};

// splitmix64 finalizer; used to derive independent seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(master) ^ a) ^ b);
}

// FNV-1a, stable across platforms (std::hash is not).
inline std::uint64_t stable_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Uniform double in [lo, hi) built directly from the engine bits so the
// stream does not depend on the standard library's distribution code.
inline double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  // Lemire-free rejection: n is always small next to 2^64.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

// Box-Muller standard normal, again independent of <random> internals.
class NormalSampler {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform(rng, 0.0, 1.0);
    } while (u1 <= 0.0);
    const double u2 = uniform(rng, 0.0, 1.0);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

inline Matrix one_hot(const Labels& y, int classes = 2) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(y.size()), classes);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= classes) {
      throw Error("label " + std::to_string(y[i]) + " at row " +
                  std::to_string(i) + " outside [0," +
                  std::to_string(classes) + ")");
    }
    out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  }
  return out;
}

inline Matrix select_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

template <class T>
std::vector<T> select(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

}  // namespace enggnn
