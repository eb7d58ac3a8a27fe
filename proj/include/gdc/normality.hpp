#pragma once

// Per-class Gaussianity audit: PCA of each class's embeddings followed by a
// Shapiro-Wilk test on every leading principal-component score.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gdc/archive.hpp"
#include "gdc/block.hpp"
#include "gdc/error.hpp"
#include "gdc/gaussian.hpp"
#include "gdc/linalg.hpp"

namespace gdc {

/// Inverse standard normal CDF (Wichura, AS 241 PPND16; ~1e-16 relative).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidArgument, "quantile probability must be in (0, 1)");
  static constexpr double a[] = {3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
                                 1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
                                 3.3430575583588128105e+4, 2.5090809287301226727e+3};
  static constexpr double b[] = {1.0,
                                 4.2313330701600911252e+1, 6.8718700749205790830e+2, 5.3941960214247511077e+3,
                                 2.1213794301586595867e+4, 3.9307895800092710610e+4, 2.8729085735721942674e+4,
                                 5.2264952788528545610e+3};
  static constexpr double c[] = {1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
                                 3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
                                 2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static constexpr double d[] = {1.0,
                                 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
                                 1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
                                 1.05075007164441684324e-9};
  static constexpr double e[] = {6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
                                 2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                 2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static constexpr double f[] = {1.0,
                                 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
                                 7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
                                 2.04426310338993978564e-15};
  auto horner = [](const double* coef, double x) {
    double s = 0.0;
    for (int i = 7; i >= 0; --i) s = s * x + coef[i];
    return s;
  };

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * horner(a, r) / horner(b, r);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = horner(c, r) / horner(d, r);
  } else {
    r -= 5.0;
    v = horner(e, r) / horner(f, r);
  }
  return q < 0.0 ? -v : v;
}

/// Upper tail of the standard normal, 1 - Phi(z).
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

struct SwResult {
  std::size_t n = 0;
  double w = 0.0;
  double p_value = 0.0;
};

inline constexpr std::size_t kShapiroMinN = 3;
inline constexpr std::size_t kShapiroMaxN = 5000;

namespace detail {

/// c[0] + c[1] x + ... + c[n-1] x^(n-1)
inline double poly(std::span<const double> c, double x) {
  double s = 0.0;
  for (std::size_t i = c.size(); i-- > 0;) s = s * x + c[i];
  return s;
}

/// Antisymmetric Shapiro-Wilk coefficients for a sample of size n, in order-statistic order.
inline std::vector<double> shapiro_coefficients(std::size_t n) {
  const std::size_t half = n / 2;
  std::vector<double> upper(half);
  if (n == 3) {
    upper[0] = std::sqrt(0.5);
  } else {
    static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056};
    static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double an = static_cast<double>(n);
    // Blom scores for the lower half of the expected normal order statistics.
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = poly(c1, rsn) - m[0] / ssumm2;
    std::size_t first_plain;
    double fac;
    if (n > 5) {
      const double a2 = -m[1] / ssumm2 + poly(c2, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      upper[1] = a2;
      first_plain = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
      first_plain = 1;
    }
    upper[0] = a1;
    for (std::size_t i = first_plain; i < half; ++i) upper[i] = -m[i] / fac;
  }
  std::vector<double> full(n, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    full[i] = -upper[i];
    full[n - 1 - i] = upper[i];
  }
  return full;
}

}  // namespace detail

/// Shapiro-Wilk W with Royston's (1995) coefficient and p-value approximations.
inline SwResult shapiro_wilk(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < kShapiroMinN) throw Error(ErrorKind::SampleTooSmall, "Shapiro-Wilk needs n >= 3, got " + std::to_string(n));
  if (n > kShapiroMaxN)
    throw Error(ErrorKind::SampleTooLarge, "Shapiro-Wilk supports n <= 5000, got " + std::to_string(n));
  for (double v : sample)
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "sample contains a non-finite value");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  if (x.front() == x.back()) throw Error(ErrorKind::ConstantSample, "sample is constant");

  const auto a = detail::shapiro_coefficients(n);
  double xm = 0.0, am = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xm += x[i];
    am += a[i];
  }
  xm /= static_cast<double>(n);
  am /= static_cast<double>(n);
  double sax = 0.0, ssa = 0.0, ssx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - am, dx = x[i] - xm;
    sax += da * dx;
    ssa += da * da;
    ssx += dx * dx;
  }
  if (!(ssx > 0.0)) throw Error(ErrorKind::ConstantSample, "sample has zero variance");
  const double w = std::min(1.0, sax * sax / (ssa * ssx));

  SwResult out{n, w, 1.0};
  if (n == 3) {
    constexpr double pi6 = 6.0 / std::numbers::pi;
    constexpr double stqr = std::numbers::pi / 3.0;
    out.p_value = std::clamp(pi6 * (std::asin(std::sqrt(w)) - stqr), 0.0, 1.0);
    return out;
  }
  if (w >= 1.0) return out;  // log(1 - w) undefined; a perfect fit cannot reject normality

  double y = std::log(1.0 - w);
  const double an = static_cast<double>(n);
  double mean, sd;
  if (n <= 11) {
    static constexpr double g[] = {-2.273, 0.459};
    static constexpr double c3[] = {0.544, -0.39978, 0.025054, -6.714e-4};
    static constexpr double c4[] = {1.3822, -0.77857, 0.062767, -0.0020322};
    const double gamma = detail::poly(g, an);
    if (y >= gamma) {
      out.p_value = 1e-99;
      return out;
    }
    y = -std::log(gamma - y);
    mean = detail::poly(c3, an);
    sd = std::exp(detail::poly(c4, an));
  } else {
    static constexpr double c5[] = {-1.5861, -0.31082, -0.083751, 0.0038915};
    static constexpr double c6[] = {-0.4803, -0.082676, 0.0030302};
    const double ln_n = std::log(an);
    mean = detail::poly(c5, ln_n);
    sd = std::exp(detail::poly(c6, ln_n));
  }
  out.p_value = std::clamp(normal_sf((y - mean) / sd), 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaProjection {
  std::string class_label;
  DoubleBlock axes;                        // c x d, one unit axis per row
  std::vector<double> explained_variance;  // c values, descending, clamped at 0
  double total_variance = 0.0;             // trace of the covariance
  DoubleBlock scores;                      // N x c
};

namespace detail {

inline double norm2(std::span<const double> v) { return std::sqrt(linalg::dot(v.data(), v.data(), v.size())); }

/// Makes `v` orthogonal to the first `count` rows of `axes` (two passes of
/// modified Gram-Schmidt) and normalizes it. Returns false if it collapses.
inline bool orthonormalize_against(std::vector<double>& v, const DoubleBlock& axes, std::size_t count) {
  const double start = norm2(v);
  if (!(start > 0.0)) return false;
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t j = 0; j < count; ++j) {
      const auto ax = axes.row(j);
      const double proj = linalg::dot(ax.data(), v.data(), v.size());
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * ax[i];
    }
  const double len = norm2(v);
  if (!(len > 1e-8 * start)) return false;
  for (double& x : v) x /= len;
  return true;
}

inline void fix_sign(std::span<double> v) {
  std::size_t big = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[big])) big = i;
  if (v[big] < 0.0)
    for (double& x : v) x = -x;
}

}  // namespace detail

/// Projects the centered rows of `data` onto their `components` leading
/// principal axes (eigenvectors of the ML covariance). When N < d the
/// eigenproblem is solved on the N x N Gram matrix, which has the same
/// nonzero spectrum.
template <class T>
PcaProjection pca_project(const Block<T>& data, std::size_t components, std::string label = {}) {
  const std::size_t n = data.rows(), d = data.cols();
  if (n < 2) throw Error(ErrorKind::TooFewSamples, "PCA needs at least 2 samples, got " + std::to_string(n));
  if (components < 1 || components > std::min(n - 1, d))
    throw Error(ErrorKind::ComponentCountOutOfRange, "component count " + std::to_string(components) +
                                                         " outside [1, " + std::to_string(std::min(n - 1, d)) + "]");

  const std::vector<double> mean = column_mean(data);
  DoubleBlock x(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) x(r, j) = static_cast<double>(data(r, j)) - mean[j];

  PcaProjection out;
  out.class_label = std::move(label);
  out.axes = DoubleBlock(components, d);
  out.explained_variance.resize(components);
  const double inv_n = 1.0 / static_cast<double>(n);

  if (n < d) {
    linalg::SymMatrix gram(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) gram.lower(i, j) = linalg::dot(x.row(i).data(), x.row(j).data(), d) * inv_n;
    out.total_variance = gram.trace();
    const linalg::Spectrum spec = linalg::sym_eig(gram);
    std::size_t next_basis = 0;
    for (std::size_t c = 0; c < components; ++c) {
      std::vector<double> axis(d, 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        const double u = spec.vector_entry(r, c);
        const auto row = x.row(r);
        for (std::size_t j = 0; j < d; ++j) axis[j] += u * row[j];
      }
      if (!(spec.values[c] > 0.0) || !detail::orthonormalize_against(axis, out.axes, c)) {
        // Null direction: any unit vector orthogonal to the previous axes.
        do {
          std::fill(axis.begin(), axis.end(), 0.0);
          axis[next_basis++] = 1.0;
        } while (!detail::orthonormalize_against(axis, out.axes, c));
      }
      detail::fix_sign(axis);
      std::copy(axis.begin(), axis.end(), out.axes.row(c).begin());
      out.explained_variance[c] = std::max(0.0, spec.values[c]);
    }
  } else {
    const linalg::SymMatrix cov = ml_covariance(data, mean);
    out.total_variance = cov.trace();
    const linalg::Spectrum spec = linalg::sym_eig(cov);
    for (std::size_t c = 0; c < components; ++c) {
      for (std::size_t j = 0; j < d; ++j) out.axes(c, j) = spec.vector_entry(j, c);
      out.explained_variance[c] = std::max(0.0, spec.values[c]);
    }
  }

  out.scores = DoubleBlock(n, components);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < components; ++c)
      out.scores(r, c) = linalg::dot(x.row(r).data(), out.axes.row(c).data(), d);
  return out;
}

// ---------------------------------------------------------------------------
// Audit

inline constexpr std::size_t kDefaultAuditComponents = 30;
inline constexpr double kDefaultAlpha = 0.05;

struct ClassNormality {
  std::string label;
  std::size_t n = 0;
  std::vector<SwResult> components;
  std::size_t passed = 0;  // components with p > alpha
  double pass_fraction = 0.0;
};

struct NormalityReport {
  double alpha = kDefaultAlpha;
  std::size_t components_per_class = 0;
  std::vector<ClassNormality> classes;
  std::size_t passed = 0;
  std::size_t tested = 0;
  double pass_fraction = 0.0;  // pooled over every class's components
};

inline NormalityReport audit(const EmbeddingArchive& archive, std::size_t components, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be in (0, 1)");
  if (archive.size() == 0) throw Error(ErrorKind::EmptyInput, "archive has no classes");
  NormalityReport report;
  report.alpha = alpha;
  report.components_per_class = components;
  for (const auto& cls : archive.classes()) {
    const std::size_t n = cls.block.rows();
    try {
      if (n < std::max<std::size_t>(4, components + 1))
        throw Error(ErrorKind::TooFewSamples, "needs at least " + std::to_string(std::max<std::size_t>(4, components + 1)) +
                                                  " samples, has " + std::to_string(n));
      const PcaProjection pca = pca_project(cls.block, components, cls.label);
      ClassNormality cn{cls.label, n, {}, 0, 0.0};
      std::vector<double> column(n);
      for (std::size_t c = 0; c < components; ++c) {
        for (std::size_t r = 0; r < n; ++r) column[r] = pca.scores(r, c);
        const SwResult sw = shapiro_wilk(column);
        if (sw.p_value > alpha) ++cn.passed;
        cn.components.push_back(sw);
      }
      cn.pass_fraction = static_cast<double>(cn.passed) / static_cast<double>(components);
      report.passed += cn.passed;
      report.tested += components;
      report.classes.push_back(std::move(cn));
    } catch (const Error& e) {
      rethrow_with_context(e, "class '" + cls.label + "'");
    }
  }
  report.pass_fraction = static_cast<double>(report.passed) / static_cast<double>(report.tested);
  return report;
}

}  // namespace gdc
