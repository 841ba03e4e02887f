#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace asyncps {

// Raised when an operation would leave a non-finite entry behind.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense model-parameter vector.
class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  DenseVector(std::initializer_list<double> init) : values_(init) {}
  explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  const std::vector<double>& values() const noexcept { return values_; }

  DenseVector& operator+=(const DenseVector& rhs) {
    check_same_size(rhs);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += rhs.values_[i];
    return *this;
  }

  DenseVector& operator-=(const DenseVector& rhs) {
    check_same_size(rhs);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= rhs.values_[i];
    return *this;
  }

  DenseVector& operator*=(double s) noexcept {
    for (double& v : values_) v *= s;
    return *this;
  }

  friend DenseVector operator+(DenseVector lhs, const DenseVector& rhs) { return lhs += rhs; }
  friend DenseVector operator-(DenseVector lhs, const DenseVector& rhs) { return lhs -= rhs; }
  friend DenseVector operator*(DenseVector lhs, double s) { return lhs *= s; }
  friend DenseVector operator*(double s, DenseVector rhs) { return rhs *= s; }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  void check_same_size(const DenseVector& rhs) const {
    if (rhs.size() != size()) {
      throw std::invalid_argument("dimension mismatch: " + std::to_string(size()) + " vs " +
                                  std::to_string(rhs.size()));
    }
  }

  std::vector<double> values_;
};

// One sample: sparse features plus a label. Indices are strictly increasing.
struct SparseRow {
  std::vector<std::size_t> indices;
  std::vector<double> values;
  double label = 0.0;

  std::size_t nnz() const noexcept { return indices.size(); }

  // Smallest dimension able to hold this row.
  std::size_t min_dim() const noexcept { return indices.empty() ? 0 : indices.back() + 1; }

  bool well_formed() const noexcept {
    if (indices.size() != values.size()) return false;
    for (std::size_t i = 1; i < indices.size(); ++i) {
      if (indices[i] <= indices[i - 1]) return false;
    }
    return true;
  }

  friend bool operator==(const SparseRow&, const SparseRow&) = default;
};

inline double dot(const DenseVector& a, const DenseVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const SparseRow& row, const DenseVector& w) noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < row.indices.size(); ++k) s += row.values[k] * w[row.indices[k]];
  return s;
}

// y += alpha * x
inline void axpy(double alpha, const DenseVector& x, DenseVector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// y += alpha * row.x
inline void axpy(double alpha, const SparseRow& row, DenseVector& y) noexcept {
  for (std::size_t k = 0; k < row.indices.size(); ++k) y[row.indices[k]] += alpha * row.values[k];
}

inline double squared_norm(const DenseVector& v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double squared_norm(const SparseRow& row) noexcept {
  double s = 0.0;
  for (double x : row.values) s += x * x;
  return s;
}

inline double max_abs_diff(const DenseVector& a, const DenseVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: dimension mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool all_finite(const DenseVector& v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline const DenseVector& ensure_finite(const DenseVector& v, const char* what) {
  if (!all_finite(v)) throw NumericalError(std::string(what) + ": non-finite entry");
  return v;
}

}  // namespace asyncps
