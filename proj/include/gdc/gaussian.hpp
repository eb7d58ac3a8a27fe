#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gdc/block.hpp"
#include "gdc/error.hpp"
#include "gdc/linalg.hpp"

namespace gdc {

inline constexpr double kDefaultEps = 1e-8;

/// One class's Gaussian, stored in precision-factor form: the inverse W of
/// the Cholesky factor of the regularized covariance, so Sigma^-1 = W^T W.
class ClassGaussian {
 public:
  ClassGaussian(std::size_t class_id, std::string label, std::vector<double> mean,
                linalg::LowerTriangular inv_factor, double log_det_cov, std::uint32_t n_ref, double eps)
      : class_id_(class_id),
        label_(std::move(label)),
        mean_(std::move(mean)),
        inv_factor_(std::move(inv_factor)),
        log_det_cov_(log_det_cov),
        n_ref_(n_ref),
        eps_(eps) {
    if (mean_.size() != inv_factor_.order())
      throw Error(ErrorKind::DimensionMismatch, "mean length does not match factor order");
    for (std::size_t i = 0; i < mean_.size(); ++i)
      if (!(inv_factor_.diag(i) > 0.0))
        throw Error(ErrorKind::ZeroDiagonal, "inverse factor diagonal " + std::to_string(i) + " is not positive");
    if (!std::isfinite(log_det_cov_)) throw Error(ErrorKind::NonFinite, "log determinant is not finite");
    if (n_ref_ == 0) throw Error(ErrorKind::EmptyClass, "component '" + label_ + "' has no references");
    if (!(eps_ >= 0.0) || !std::isfinite(eps_)) throw Error(ErrorKind::InvalidArgument, "eps must be finite and >= 0");
  }

  std::size_t class_id() const noexcept { return class_id_; }
  const std::string& label() const noexcept { return label_; }
  std::size_t dim() const noexcept { return mean_.size(); }
  std::span<const double> mean() const noexcept { return mean_; }
  const linalg::LowerTriangular& inv_factor() const noexcept { return inv_factor_; }
  double log_det_cov() const noexcept { return log_det_cov_; }
  std::uint32_t n_ref() const noexcept { return n_ref_; }
  double eps() const noexcept { return eps_; }

  ClassGaussian with_identity(std::size_t class_id, std::string label) const {
    ClassGaussian g = *this;
    g.class_id_ = class_id;
    g.label_ = std::move(label);
    return g;
  }

  friend bool operator==(const ClassGaussian&, const ClassGaussian&) = default;

 private:
  std::size_t class_id_;
  std::string label_;
  std::vector<double> mean_;
  linalg::LowerTriangular inv_factor_;
  double log_det_cov_;
  std::uint32_t n_ref_;
  double eps_;
};

/// Maximum-likelihood (divide by N) covariance of the rows of `refs`, in packed form.
template <class T>
linalg::SymMatrix ml_covariance(const Block<T>& refs, std::span<const double> mean) {
  const std::size_t n = refs.rows(), d = refs.cols();
  linalg::SymMatrix cov(d);
  auto packed = cov.packed();
  std::vector<double> diff(d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = refs.row(r);
    for (std::size_t j = 0; j < d; ++j) diff[j] = static_cast<double>(row[j]) - mean[j];
    for (std::size_t i = 0; i < d; ++i) {
      const double di = diff[i];
      double* dst = packed.data() + linalg::packed_index(i, 0);
      for (std::size_t j = 0; j <= i; ++j) dst[j] += di * diff[j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : packed) v *= inv_n;
  return cov;
}

template <class T>
std::vector<double> column_mean(const Block<T>& refs) {
  std::vector<double> mean(refs.cols(), 0.0);
  for (std::size_t r = 0; r < refs.rows(); ++r) {
    const auto row = refs.row(r);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += static_cast<double>(row[j]);
  }
  for (double& m : mean) m /= static_cast<double>(refs.rows());
  return mean;
}

/// Fits N(mu, Sigma + eps*I) to the rows of `refs`. eps = 0 disables
/// regularization, which fails for rank-deficient references (N <= d).
template <class T>
ClassGaussian fit_class(const Block<T>& refs, double eps, std::size_t class_id, std::string label) {
  if (refs.rows() == 0) throw Error(ErrorKind::EmptyClass, "class '" + label + "' has no reference rows");
  if (refs.cols() == 0) throw Error(ErrorKind::InvalidArgument, "embedding dimension must be >= 1");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw Error(ErrorKind::InvalidArgument, "eps must be finite and >= 0");
  for (T v : refs.data())
    if (!std::isfinite(static_cast<double>(v)))
      throw Error(ErrorKind::NonFinite, "class '" + label + "' contains a non-finite value");

  std::vector<double> mean = column_mean(refs);
  linalg::SymMatrix cov = ml_covariance(refs, mean);
  for (std::size_t i = 0; i < cov.order(); ++i) cov.lower(i, i) += eps;

  const linalg::LowerTriangular w = linalg::invert_lower(linalg::cholesky_factor(cov));
  double log_det = 0.0;
  for (std::size_t i = 0; i < w.order(); ++i) log_det -= 2.0 * std::log(w.diag(i));
  return ClassGaussian(class_id, std::move(label), std::move(mean), w, log_det,
                       static_cast<std::uint32_t>(refs.rows()), eps);
}

/// log N(e; mu, Sigma_hat) = -(d/2) ln(2 pi) - log|Sigma_hat|/2 - ||W (e - mu)||^2 / 2.
template <class T>
double log_density(const ClassGaussian& g, std::span<const T> e) {
  const std::size_t d = g.dim();
  if (e.size() != d)
    throw Error(ErrorKind::DimensionMismatch,
                "embedding has dimension " + std::to_string(e.size()) + ", model expects " + std::to_string(d));
  std::vector<double> diff(d);
  const auto mu = g.mean();
  for (std::size_t j = 0; j < d; ++j) diff[j] = static_cast<double>(e[j]) - mu[j];
  const double quad = linalg::squared_norm_of_product(g.inv_factor(), diff);
  constexpr double log_two_pi = 1.8378770664093454835606594728112;  // ln(2 pi)
  return -0.5 * static_cast<double>(d) * log_two_pi - 0.5 * g.log_det_cov() - 0.5 * quad;
}

inline double log_density(const ClassGaussian& g, std::span<const double> e) {
  return log_density<double>(g, e);
}

}  // namespace gdc
