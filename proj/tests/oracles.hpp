#pragma once

// Test-only reference computations. Nothing here calls into the gdc numeric
// kernels, so agreement with them is an independent check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "gdc/block.hpp"

namespace oracle {

using Dense = std::vector<double>;  // row-major n x n

inline Dense identity(std::size_t n) {
  Dense m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
  return m;
}

inline Dense matmul(const Dense& a, const Dense& b, std::size_t n) {
  Dense c(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += a[i * n + k] * b[k * n + j];
  return c;
}

inline Dense transpose(const Dense& a, std::size_t n) {
  Dense t(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * n + i] = a[i * n + j];
  return t;
}

/// A = B B^T + I with B uniform in [-1, 1).
inline Dense random_spd(std::size_t n, std::mt19937_64& rng, double shift = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Dense b(n * n);
  for (double& v : b) v = u(rng);
  Dense a = matmul(b, transpose(b, n), n);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] += shift;
  return a;
}

inline Dense random_symmetric(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Dense a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a[i * n + j] = a[j * n + i] = u(rng);
  return a;
}

struct InverseResult {
  Dense inverse;
  double log_abs_det = 0.0;
  int det_sign = 1;
};

/// Gauss-Jordan elimination with partial pivoting.
inline InverseResult invert(Dense a, std::size_t n) {
  Dense inv = identity(n);
  double log_det = 0.0;
  int sign = 1;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a[piv * n + j], a[col * n + j]);
        std::swap(inv[piv * n + j], inv[col * n + j]);
      }
      sign = -sign;
    }
    const double p = a[col * n + col];
    if (p < 0) sign = -sign;
    log_det += std::log(std::abs(p));
    for (std::size_t j = 0; j < n; ++j) {
      a[col * n + j] /= p;
      inv[col * n + j] /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r * n + j] -= f * a[col * n + j];
        inv[r * n + j] -= f * inv[col * n + j];
      }
    }
  }
  return {inv, log_det, sign};
}

/// log N(x; mu, cov) from an explicit inverse and determinant.
inline double log_density(const std::vector<double>& x, const std::vector<double>& mu, const Dense& cov) {
  const std::size_t n = mu.size();
  const auto inv = invert(cov, n);
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) quad += (x[i] - mu[i]) * inv.inverse[i * n + j] * (x[j] - mu[j]);
  return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - 0.5 * inv.log_abs_det - 0.5 * quad;
}

/// Outer-product (recursive) Cholesky: A^(i) = L_i A^(i+1) L_i^T, L = L_1 L_2 ... L_n.
inline Dense recursive_cholesky(const Dense& a_in, std::size_t n) {
  Dense a = a_in;
  Dense l = identity(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double aii = a[i * n + i];
    const double root = std::sqrt(aii);
    Dense li = identity(n);
    li[i * n + i] = root;
    for (std::size_t r = i + 1; r < n; ++r) li[r * n + i] = a[r * n + i] / root;
    Dense next = a;
    for (std::size_t r = i + 1; r < n; ++r)
      for (std::size_t c = i + 1; c < n; ++c) next[r * n + c] = a[r * n + c] - a[r * n + i] * a[i * n + c] / aii;
    for (std::size_t k = 0; k < n; ++k) next[i * n + k] = next[k * n + i] = 0.0;
    next[i * n + i] = 1.0;
    a = std::move(next);
    l = matmul(l, li, n);
  }
  return l;
}

/// det(A - lambda I) by Gaussian elimination with partial pivoting.
inline double char_poly(const Dense& a_in, std::size_t n, double lambda) {
  Dense a = a_in;
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] -= lambda;
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (a[piv * n + col] == 0.0) return 0.0;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[piv * n + j], a[col * n + j]);
      det = -det;
    }
    det *= a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      for (std::size_t j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
    }
  }
  return det;
}

/// Real roots of the characteristic polynomial, descending, found by a fine
/// sign-change scan over the Gershgorin interval and bisection.
inline std::vector<double> eigenvalues_by_bisection(const Dense& a, std::size_t n, std::size_t steps = 200000) {
  double radius = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r += std::abs(a[i * n + j]);
    radius = std::max(radius, r);
  }
  const double lo = -radius - 1e-6, hi = radius + 1e-6;
  std::vector<double> roots;
  double prev_x = lo, prev_f = char_poly(a, n, lo);
  for (std::size_t s = 1; s <= steps; ++s) {
    const double x = lo + (hi - lo) * static_cast<double>(s) / static_cast<double>(steps);
    const double f = char_poly(a, n, x);
    if ((prev_f < 0) != (f < 0)) {
      double l = prev_x, h = x, fl = prev_f;
      for (int it = 0; it < 200 && h - l > 1e-15 * std::max(1.0, std::abs(h)); ++it) {
        const double m = 0.5 * (l + h);
        const double fm = char_poly(a, n, m);
        if ((fm < 0) == (fl < 0)) {
          l = m;
          fl = fm;
        } else {
          h = m;
        }
      }
      roots.push_back(0.5 * (l + h));
    }
    prev_x = x;
    prev_f = f;
  }
  std::sort(roots.rbegin(), roots.rend());
  return roots;
}

/// Dense Cholesky used only to draw correlated Gaussian samples in tests.
inline Dense sampling_factor(const Dense& cov, std::size_t n) {
  Dense l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = cov[j * n + j];
    for (std::size_t k = 0; k < j; ++k) s -= l[j * n + k] * l[j * n + k];
    l[j * n + j] = std::sqrt(s);
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = cov[i * n + j];
      for (std::size_t k = 0; k < j; ++k) t -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = t / l[j * n + j];
    }
  }
  return l;
}

inline std::vector<double> sample_gaussian(const std::vector<double>& mu, const Dense& factor,
                                           std::mt19937_64& rng) {
  const std::size_t n = mu.size();
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> u(n), x(mu);
  for (double& v : u) v = z(rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k <= i; ++k) x[i] += factor[i * n + k] * u[k];
  return x;
}

template <class T>
gdc::Block<T> gaussian_block(std::size_t rows, const std::vector<double>& mu, const Dense& cov, std::mt19937_64& rng) {
  const std::size_t d = mu.size();
  const Dense f = sampling_factor(cov, d);
  gdc::Block<T> out(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto x = sample_gaussian(mu, f, rng);
    for (std::size_t j = 0; j < d; ++j) out(r, j) = static_cast<T>(x[j]);
  }
  return out;
}

inline double max_abs_diff(const Dense& a, const Dense& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
