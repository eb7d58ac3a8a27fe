#pragma once

// Dense symmetric kernels on packed lower-triangle storage.
//
// Packed layout is row-major over the lower triangle: entry (i, j) with
// j <= i lives at i*(i+1)/2 + j, so row i is contiguous and has i+1 entries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gdc/error.hpp"

namespace gdc::linalg {

constexpr std::size_t packed_size(std::size_t order) { return order * (order + 1) / 2; }
constexpr std::size_t packed_index(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }

/// Dot product over eight independent lanes, combined pairwise at the end.
/// The summation order is fixed, so results are reproducible bit for bit
/// for a given build whether or not the compiler vectorizes the lanes.
inline double dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[k + l] * b[k + l];
  for (std::size_t l = 0; k < n; ++k, ++l) acc[l] += a[k] * b[k];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

class SymMatrix {
 public:
  explicit SymMatrix(std::size_t order) : order_(order), data_(packed_size(order), 0.0) {
    if (order == 0) throw Error(ErrorKind::InvalidArgument, "matrix order must be >= 1");
  }

  static SymMatrix identity(std::size_t order) {
    SymMatrix m(order);
    for (std::size_t i = 0; i < order; ++i) m.lower(i, i) = 1.0;
    return m;
  }

  /// Builds from a dense row-major order x order array; only the lower triangle is read.
  static SymMatrix from_dense(std::span<const double> dense, std::size_t order) {
    if (dense.size() != order * order)
      throw Error(ErrorKind::DimensionMismatch, "dense size does not match order^2");
    SymMatrix m(order);
    for (std::size_t i = 0; i < order; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.lower(i, j) = dense[i * order + j];
    return m;
  }

  std::size_t order() const noexcept { return order_; }

  double operator()(std::size_t i, std::size_t j) const {
    return i >= j ? data_[packed_index(i, j)] : data_[packed_index(j, i)];
  }
  /// Mutable access to the stored triangle; requires j <= i.
  double& lower(std::size_t i, std::size_t j) { return data_[packed_index(i, j)]; }

  std::span<const double> packed() const noexcept { return data_; }
  std::span<double> packed() noexcept { return data_; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < order_; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = data_[packed_index(i, j)];
        s += (i == j ? 1.0 : 2.0) * v * v;
      }
    return std::sqrt(s);
  }

  double trace() const {
    double s = 0.0;
    for (std::size_t i = 0; i < order_; ++i) s += data_[packed_index(i, i)];
    return s;
  }

  std::vector<double> to_dense() const {
    std::vector<double> out(order_ * order_);
    for (std::size_t i = 0; i < order_; ++i)
      for (std::size_t j = 0; j < order_; ++j) out[i * order_ + j] = (*this)(i, j);
    return out;
  }

 private:
  std::size_t order_;
  std::vector<double> data_;
};

/// Immutable lower-triangular matrix. Copies share the underlying buffer.
class LowerTriangular {
 public:
  LowerTriangular(std::size_t order, std::vector<double> packed)
      : order_(order), data_(std::make_shared<const std::vector<double>>(std::move(packed))) {
    if (order == 0) throw Error(ErrorKind::InvalidArgument, "matrix order must be >= 1");
    if (data_->size() != packed_size(order))
      throw Error(ErrorKind::DimensionMismatch, "packed size does not match order");
  }

  static LowerTriangular identity(std::size_t order) { return diagonal(std::vector<double>(order, 1.0)); }

  static LowerTriangular diagonal(std::span<const double> diag) {
    std::vector<double> p(packed_size(diag.size()), 0.0);
    for (std::size_t i = 0; i < diag.size(); ++i) p[packed_index(i, i)] = diag[i];
    return LowerTriangular(diag.size(), std::move(p));
  }

  std::size_t order() const noexcept { return order_; }

  double operator()(std::size_t i, std::size_t j) const {
    return j <= i ? (*data_)[packed_index(i, j)] : 0.0;
  }
  double diag(std::size_t i) const { return (*data_)[packed_index(i, i)]; }

  /// Row i restricted to its stored entries (columns 0..i).
  std::span<const double> row(std::size_t i) const {
    return {data_->data() + packed_index(i, 0), i + 1};
  }

  std::span<const double> packed() const noexcept { return *data_; }

  std::vector<double> to_dense() const {
    std::vector<double> out(order_ * order_, 0.0);
    for (std::size_t i = 0; i < order_; ++i)
      for (std::size_t j = 0; j <= i; ++j) out[i * order_ + j] = (*data_)[packed_index(i, j)];
    return out;
  }

  friend bool operator==(const LowerTriangular& a, const LowerTriangular& b) {
    return a.order_ == b.order_ && (a.data_ == b.data_ || *a.data_ == *b.data_);
  }

 private:
  std::size_t order_;
  std::shared_ptr<const std::vector<double>> data_;
};

/// Eigen-decomposition of a symmetric matrix. Eigenvectors are the columns of
/// a dense row-major order x order matrix, matched to `values` by index.
struct Spectrum {
  std::vector<double> values;
  std::vector<double> vectors;

  std::size_t order() const noexcept { return values.size(); }
  double vector_entry(std::size_t row, std::size_t col) const { return vectors[row * values.size() + col]; }
  std::vector<double> column(std::size_t j) const {
    std::vector<double> v(order());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = vector_entry(i, j);
    return v;
  }
};

/// Cholesky-Banachiewicz: fills C row by row so that C * C^T = a.
inline LowerTriangular cholesky_factor(const SymMatrix& a) {
  const std::size_t d = a.order();
  std::vector<double> c(packed_size(d));
  const auto src = a.packed();
  for (std::size_t i = 0; i < d; ++i) {
    double* ci = c.data() + packed_index(i, 0);
    for (std::size_t j = 0; j < i; ++j) {
      const double* cj = c.data() + packed_index(j, 0);
      ci[j] = (src[packed_index(i, j)] - dot(ci, cj, j)) / cj[j];
    }
    const double pivot = src[packed_index(i, i)] - dot(ci, ci, i);
    if (!(pivot > 0.0)) throw NotPositiveDefiniteError(i, pivot);
    ci[i] = std::sqrt(pivot);
  }
  return LowerTriangular(d, std::move(c));
}

/// Forward substitution: returns z with c * z = b.
inline std::vector<double> solve_lower(const LowerTriangular& c, std::span<const double> b) {
  const std::size_t d = c.order();
  if (b.size() != d)
    throw Error(ErrorKind::DimensionMismatch,
                "rhs has length " + std::to_string(b.size()) + ", expected " + std::to_string(d));
  std::vector<double> z(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto ci = c.row(i);
    z[i] = (b[i] - dot(ci.data(), z.data(), i)) / ci[i];
  }
  return z;
}

/// Inverse of a lower-triangular matrix, built row by row from
/// W_i = (e_i - sum_{k<i} C_ik W_k) / C_ii.
inline LowerTriangular invert_lower(const LowerTriangular& c) {
  const std::size_t d = c.order();
  for (std::size_t i = 0; i < d; ++i)
    if (!(c.diag(i) > 0.0))
      throw Error(ErrorKind::ZeroDiagonal, "diagonal entry " + std::to_string(i) + " is not positive");

  std::vector<double> w(packed_size(d), 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double* wi = w.data() + packed_index(i, 0);
    const auto ci = c.row(i);
    for (std::size_t k = 0; k < i; ++k) {
      const double cik = ci[k];
      if (cik == 0.0) continue;
      const double* wk = w.data() + packed_index(k, 0);
      for (std::size_t j = 0; j <= k; ++j) wi[j] -= cik * wk[j];
    }
    const double inv = 1.0 / ci[i];
    for (std::size_t j = 0; j < i; ++j) wi[j] *= inv;
    wi[i] = inv;
  }
  return LowerTriangular(d, std::move(w));
}

/// Returns y = m * x.
inline std::vector<double> multiply(const LowerTriangular& m, std::span<const double> x) {
  if (x.size() != m.order()) throw Error(ErrorKind::DimensionMismatch, "vector length does not match order");
  std::vector<double> y(m.order());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = dot(m.row(i).data(), x.data(), i + 1);
  return y;
}

/// ||m * x||^2 without materializing the product.
inline double squared_norm_of_product(const LowerTriangular& m, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.order(); ++i) {
    const double yi = dot(m.row(i).data(), x.data(), i + 1);
    s += yi * yi;
  }
  return s;
}

inline constexpr int kJacobiSweepBudget = 100;
inline constexpr double kJacobiRelativeTolerance = 1e-12;

/// Cyclic Jacobi eigensolver. Eigenvalues come back sorted descending; each
/// eigenvector is signed so that its largest-magnitude entry is positive.
inline Spectrum sym_eig(const SymMatrix& a) {
  const std::size_t d = a.order();
  std::vector<double> m = a.to_dense();
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < i; ++j) s += 2.0 * m[i * d + j] * m[i * d + j];
    return std::sqrt(s);
  };

  const double tol = kJacobiRelativeTolerance * a.frobenius_norm();
  bool converged = off_norm() <= tol;
  for (int sweep = 0; sweep < kJacobiSweepBudget && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = m[p * d + q];
        if (apq == 0.0) continue;
        const double theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150)
          t = 0.5 / theta;
        else
          t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double mkp = m[k * d + p], mkq = m[k * d + q];
          m[k * d + p] = c * mkp - s * mkq;
          m[k * d + q] = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double mpk = m[p * d + k], mqk = m[q * d + k];
          m[p * d + k] = c * mpk - s * mqk;
          m[q * d + k] = s * mpk + c * mqk;
        }
        m[p * d + q] = 0.0;
        m[q * d + p] = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
    converged = off_norm() <= tol;
  }
  if (!converged)
    throw Error(ErrorKind::ConvergenceFailure,
                "Jacobi iteration did not converge in " + std::to_string(kJacobiSweepBudget) + " sweeps");

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return m[x * d + x] > m[y * d + y]; });

  Spectrum out;
  out.values.resize(d);
  out.vectors.resize(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t src = order[j];
    out.values[j] = m[src * d + src];
    std::size_t big = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(v[i * d + src]) > std::abs(v[big * d + src])) big = i;
    const double sign = v[big * d + src] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i) out.vectors[i * d + j] = sign * v[i * d + src];
  }
  return out;
}

}  // namespace gdc::linalg
