#pragma once

// Dense numeric substrate: row-major double matrices, activations, softmax,
// Xavier initialization, inverted dropout and a deterministic RNG.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace irnn {

// Error categories shared by every module.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    Matrix m(rows.size(), cols);
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != cols) throw ShapeError("from_rows: ragged initializer");
      std::copy(row.begin(), row.end(), m.row(r++).begin());
    }
    return m;
  }

  // Column vector view of a flat array.
  static Matrix column(std::span<const double> v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void set_zero() { fill(0.0); }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

inline ConstMatMap view(const Matrix& m) {
  return ConstMatMap(m.flat().data(), Eigen::Index(m.rows()), Eigen::Index(m.cols()));
}
inline MatMap view(Matrix& m) {
  return MatMap(m.flat().data(), Eigen::Index(m.rows()), Eigen::Index(m.cols()));
}
inline ConstVecMap view(std::span<const double> v) {
  return ConstVecMap(v.data(), Eigen::Index(v.size()));
}
inline VecMap view(std::span<double> v) { return VecMap(v.data(), Eigen::Index(v.size())); }

}  // namespace detail

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  if (!out.empty() && a.cols() > 0) detail::view(out).noalias() = detail::view(a) * detail::view(b);
  return out;
}

// y = A x
inline void gemv(const Matrix& a, std::span<const double> x, std::span<double> y) {
  if (a.cols() != x.size() || a.rows() != y.size()) {
    throw ShapeError("gemv: matrix " + a.shape_string() + " with x of " +
                     std::to_string(x.size()) + " into y of " + std::to_string(y.size()));
  }
  detail::view(y).noalias() = detail::view(a) * detail::view(x);
}

// x_grad += A^T g
inline void gemv_t_add(const Matrix& a, std::span<const double> g, std::span<double> x_grad) {
  if (a.rows() != g.size() || a.cols() != x_grad.size()) {
    throw ShapeError("gemv_t_add: matrix " + a.shape_string() + " with g of " +
                     std::to_string(g.size()) + " into x of " + std::to_string(x_grad.size()));
  }
  detail::view(x_grad).noalias() += detail::view(a).transpose() * detail::view(g);
}

// A += g x^T
inline void outer_add(Matrix& a, std::span<const double> g, std::span<const double> x) {
  if (a.rows() != g.size() || a.cols() != x.size()) {
    throw ShapeError("outer_add: matrix " + a.shape_string() + " with g of " +
                     std::to_string(g.size()) + " and x of " + std::to_string(x.size()));
  }
  detail::view(a).noalias() += detail::view(g) * detail::view(x).transpose();
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  axpy(1.0, b.flat(), out.flat());
  return out;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.flat()) v *= s;
  return out;
}

// Activations.

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
// Derivative at exactly 0 is taken as 0.
inline double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
// Derivatives expressed through the activation output.
inline double sigmoid_grad_from_output(double y) { return y * (1.0 - y); }
inline double tanh_grad_from_output(double y) { return 1.0 - y * y; }

template <class F>
Matrix map(const Matrix& m, F&& f) {
  Matrix out = m;
  for (double& v : out.flat()) v = f(v);
  return out;
}

inline Matrix relu(const Matrix& m) { return map(m, [](double v) { return relu(v); }); }
inline Matrix sigmoid(const Matrix& m) { return map(m, [](double v) { return sigmoid(v); }); }
inline Matrix tanh(const Matrix& m) { return map(m, [](double v) { return std::tanh(v); }); }

// Numerically stable softmax (max subtraction).
inline void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

inline Vec softmax(std::span<const double> v) {
  Vec out(v.begin(), v.end());
  softmax_inplace(out);
  return out;
}

inline std::size_t argmax(std::span<const double> v) {
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

// Deterministic generator: the 64-bit Mersenne Twister (std::mt19937_64),
// whose output sequence is fixed by the C++ standard. Derived draws avoid the
// implementation-defined standard distributions so streams are bit-identical
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased by rejection.
  std::size_t below(std::size_t n) {
    if (n == 0) throw ConfigError("Rng::below: empty range");
    const std::uint64_t bound = std::uint64_t(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return std::size_t(x % bound);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }
  template <class T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

inline double xavier_bound(std::size_t rows, std::size_t cols) {
  return std::sqrt(6.0 / double(rows + cols));
}

inline Matrix xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("xavier_init: zero dimension " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  const double bound = xavier_bound(rows, cols);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = rng.uniform(-bound, bound);
  return m;
}

// Inverted dropout: entries are 0 or 1/keep_prob.
inline Vec dropout_mask(std::size_t len, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0) || keep_prob > 1.0) {
    throw ConfigError("dropout_mask: keep_prob must be in (0, 1], got " + std::to_string(keep_prob));
  }
  Vec mask(len, 1.0);
  if (keep_prob == 1.0) return mask;
  const double scale = 1.0 / keep_prob;
  for (double& m : mask) m = rng.uniform() < keep_prob ? scale : 0.0;
  return mask;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace irnn
