#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gdc/archive.hpp"
#include "gdc/block.hpp"
#include "gdc/error.hpp"
#include "gdc/gaussian.hpp"
#include "gdc/random.hpp"

namespace gdc {

inline constexpr double kPriorSumTolerance = 1e-12;

/// k class Gaussians with class priors. Immutable once constructed.
class GdcModel {
 public:
  /// Validates without renormalizing: priors must already sum to 1. Use
  /// assemble() to build from raw weights.
  GdcModel(std::vector<ClassGaussian> components, std::vector<double> priors)
      : components_(std::move(components)), priors_(std::move(priors)) {
    if (components_.empty()) throw Error(ErrorKind::EmptyInput, "model needs at least one component");
    if (priors_.size() != components_.size())
      throw Error(ErrorKind::DimensionMismatch, "prior count does not match component count");
    const std::size_t d = components_.front().dim();
    std::unordered_set<std::string> seen;
    double sum = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (components_[i].dim() != d)
        throw Error(ErrorKind::DimensionMismatch, "component '" + components_[i].label() + "' has dimension " +
                                                      std::to_string(components_[i].dim()) + ", expected " +
                                                      std::to_string(d));
      if (!seen.insert(components_[i].label()).second)
        throw Error(ErrorKind::DuplicateLabel, "duplicate label '" + components_[i].label() + "'");
      if (!(priors_[i] >= 0.0) || !std::isfinite(priors_[i]))
        throw Error(ErrorKind::NegativePrior, "prior of '" + components_[i].label() + "' is negative or not finite");
      sum += priors_[i];
    }
    if (std::abs(sum - 1.0) > kPriorSumTolerance)
      throw Error(ErrorKind::InvalidArgument, "priors sum to " + std::to_string(sum) + ", expected 1");
    log_priors_.reserve(priors_.size());
    for (double p : priors_) log_priors_.push_back(std::log(p));
  }

  std::size_t size() const noexcept { return components_.size(); }
  std::size_t dim() const noexcept { return components_.front().dim(); }
  const std::vector<ClassGaussian>& components() const noexcept { return components_; }
  const ClassGaussian& operator[](std::size_t i) const { return components_[i]; }
  std::span<const double> priors() const noexcept { return priors_; }
  std::span<const double> log_priors() const noexcept { return log_priors_; }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(components_.size());
    for (const auto& c : components_) out.push_back(c.label());
    return out;
  }

  std::optional<std::size_t> find(std::string_view label) const {
    for (std::size_t i = 0; i < components_.size(); ++i)
      if (components_[i].label() == label) return i;
    return std::nullopt;
  }

  friend bool operator==(const GdcModel& a, const GdcModel& b) {
    return a.components_ == b.components_ && a.priors_ == b.priors_;
  }

 private:
  std::vector<ClassGaussian> components_;
  std::vector<double> priors_;
  std::vector<double> log_priors_;
};

/// Builds a model from fitted components. Missing priors default to uniform;
/// supplied priors are normalized to sum to 1. Class ids become positions.
inline GdcModel assemble(std::vector<ClassGaussian> components, std::optional<std::vector<double>> priors = {}) {
  if (components.empty()) throw Error(ErrorKind::EmptyInput, "model needs at least one component");
  const std::size_t k = components.size();
  std::vector<double> p;
  if (!priors) {
    p.assign(k, 1.0 / static_cast<double>(k));
  } else {
    if (priors->size() != k) throw Error(ErrorKind::DimensionMismatch, "prior count does not match component count");
    double sum = 0.0;
    for (double v : *priors) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::NegativePrior, "priors must be finite and >= 0");
      sum += v;
    }
    if (!(sum > 0.0)) throw Error(ErrorKind::InvalidArgument, "priors sum to zero");
    p.reserve(k);
    for (double v : *priors) p.push_back(v / sum);
  }
  for (std::size_t i = 0; i < k; ++i) components[i] = components[i].with_identity(i, components[i].label());
  return GdcModel(std::move(components), std::move(p));
}

/// Fits every class of `references` and assembles with uniform priors.
inline GdcModel fit_model(const EmbeddingArchive& references, double eps) {
  std::vector<ClassGaussian> components;
  components.reserve(references.size());
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto& c = references[i];
    try {
      components.push_back(fit_class(c.block, eps, i, c.label));
    } catch (const Error& e) {
      rethrow_with_context(e, "class '" + c.label + "'");
    }
  }
  return assemble(std::move(components));
}

struct RankedClass {
  std::size_t index;
  double prob;

  friend bool operator==(const RankedClass&, const RankedClass&) = default;
};

struct Posterior {
  std::vector<double> log_joint;  // log prior + log density, per class
  std::vector<double> probs;
  std::size_t predicted = 0;
  std::vector<RankedClass> top;   // descending probability, ties by lower index
};

inline constexpr std::size_t kDefaultTopK = 5;

/// Normalizes log-joints with max-subtracted log-sum-exp. Argmax ties go to
/// the lowest index.
inline Posterior posterior_from_log_joint(std::vector<double> log_joint, std::size_t top_k = kDefaultTopK) {
  Posterior out;
  const std::size_t k = log_joint.size();
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i)
    if (log_joint[i] > log_joint[best]) best = i;
  const double peak = log_joint[best];

  out.probs.resize(k);
  if (peak == -std::numeric_limits<double>::infinity()) {
    // All classes impossible; fall back to uniform so probabilities stay a distribution.
    std::fill(out.probs.begin(), out.probs.end(), 1.0 / static_cast<double>(k));
  } else {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(log_joint[i] - peak);
    const double log_norm = peak + std::log(sum);
    for (std::size_t i = 0; i < k; ++i) out.probs[i] = std::exp(log_joint[i] - log_norm);
  }
  out.predicted = best;

  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  const std::size_t n = std::min(top_k, k);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (log_joint[a] != log_joint[b]) return log_joint[a] > log_joint[b];
                      return a < b;
                    });
  out.top.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.top.push_back({order[i], out.probs[order[i]]});
  out.log_joint = std::move(log_joint);
  return out;
}

namespace detail {

template <class T>
void check_dim(const GdcModel& model, std::size_t got) {
  if (got != model.dim())
    throw Error(ErrorKind::DimensionMismatch,
                "embedding has dimension " + std::to_string(got) + ", model expects " + std::to_string(model.dim()));
}

}  // namespace detail

template <class T>
std::vector<double> log_joint(const GdcModel& model, std::span<const T> e) {
  detail::check_dim<T>(model, e.size());
  std::vector<double> out(model.size());
  const auto lp = model.log_priors();
  for (std::size_t i = 0; i < model.size(); ++i) out[i] = lp[i] + log_density<T>(model[i], e);
  return out;
}

template <class T>
Posterior posterior(const GdcModel& model, std::span<const T> e, std::size_t top_k = kDefaultTopK) {
  return posterior_from_log_joint(log_joint<T>(model, e), top_k);
}

inline Posterior posterior(const GdcModel& model, std::span<const double> e, std::size_t top_k = kDefaultTopK) {
  return posterior<double>(model, e, top_k);
}

/// Bayes decision: argmax_i log pi_i + log p(e | class i), lowest index on ties.
template <class T>
std::size_t classify(const GdcModel& model, std::span<const T> e) {
  const auto lj = log_joint<T>(model, e);
  return static_cast<std::size_t>(std::max_element(lj.begin(), lj.end()) - lj.begin());
}

inline std::size_t classify(const GdcModel& model, std::span<const double> e) { return classify<double>(model, e); }

inline constexpr std::size_t kBatchRowBlock = 8;

/// Posterior for every row. Rows are scored in blocks: each row of a
/// component's inverse factor is loaded once and applied to every row in the
/// block. Per (row, component) the arithmetic is exactly that of
/// log_density(), so results match posterior() bit for bit.
template <class T>
std::vector<Posterior> classify_batch(const GdcModel& model, const Block<T>& rows, std::size_t top_k = kDefaultTopK) {
  if (rows.rows() > 0) detail::check_dim<T>(model, rows.cols());
  std::vector<Posterior> out;
  out.reserve(rows.rows());
  const std::size_t d = model.dim();
  const auto lp = model.log_priors();
  constexpr double log_two_pi = 1.8378770664093454835606594728112;
  std::vector<double> diff(kBatchRowBlock * d);
  for (std::size_t start = 0; start < rows.rows(); start += kBatchRowBlock) {
    const std::size_t count = std::min(rows.rows() - start, kBatchRowBlock);
    std::vector<std::vector<double>> lj(count, std::vector<double>(model.size()));
    for (std::size_t c = 0; c < model.size(); ++c) {
      const ClassGaussian& g = model[c];
      const auto mu = g.mean();
      for (std::size_t b = 0; b < count; ++b) {
        const auto e = rows.row(start + b);
        for (std::size_t j = 0; j < d; ++j) diff[b * d + j] = static_cast<double>(e[j]) - mu[j];
      }
      double quad[kBatchRowBlock] = {};
      const auto& w = g.inv_factor();
      for (std::size_t i = 0; i < d; ++i) {
        const double* wi = w.row(i).data();
        for (std::size_t b = 0; b < count; ++b) {
          const double yi = linalg::dot(wi, diff.data() + b * d, i + 1);
          quad[b] += yi * yi;
        }
      }
      for (std::size_t b = 0; b < count; ++b)
        lj[b][c] = lp[c] + (-0.5 * static_cast<double>(d) * log_two_pi - 0.5 * g.log_det_cov() - 0.5 * quad[b]);
    }
    for (auto& v : lj) out.push_back(posterior_from_log_joint(std::move(v), top_k));
  }
  return out;
}

/// Replaces `per_class` seeded reference rows of every class with distinct
/// seeded rows of the same class from `real`. Row counts are unchanged.
inline EmbeddingArchive inject_real(const EmbeddingArchive& references, const EmbeddingArchive& real,
                                    std::size_t per_class, std::uint64_t seed) {
  if (references.dim() != real.dim())
    throw Error(ErrorKind::DimensionMismatch, "reference and real archives differ in dimension");
  if (references.size() != real.size())
    throw Error(ErrorKind::LabelMismatch, "reference and real archives have different class sets");
  for (const auto& c : references.classes())
    if (!real.find(c.label)) throw Error(ErrorKind::LabelMismatch, "class '" + c.label + "' missing from real archive");

  EmbeddingArchive out = references;
  if (per_class == 0) return out;
  Rng rng(seed);
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto& ref = references[i];
    const auto& src = real[*real.find(ref.label)];
    if (per_class > src.block.rows())
      throw Error(ErrorKind::InsufficientRealSamples, "class '" + ref.label + "' has " +
                                                          std::to_string(src.block.rows()) + " real rows, need " +
                                                          std::to_string(per_class));
    if (per_class > ref.block.rows())
      throw Error(ErrorKind::InvalidArgument, "class '" + ref.label + "' has only " +
                                                  std::to_string(ref.block.rows()) + " reference rows");
    const auto targets = rng.sample_without_replacement(ref.block.rows(), per_class);
    const auto picks = rng.sample_without_replacement(src.block.rows(), per_class);
    FloatBlock block = ref.block;
    for (std::size_t j = 0; j < per_class; ++j) {
      const auto from = src.block.row(picks[j]);
      std::copy(from.begin(), from.end(), block.row(targets[j]).begin());
    }
    out.replace_block(i, std::move(block));
  }
  return out;
}

/// Keeps `n` seeded rows of every class (original order preserved).
inline EmbeddingArchive subsample(const EmbeddingArchive& archive, std::size_t n, std::uint64_t seed) {
  EmbeddingArchive out(archive.dim());
  Rng rng(seed);
  for (const auto& c : archive.classes()) {
    if (n > c.block.rows())
      throw Error(ErrorKind::InvalidArgument, "class '" + c.label + "' has " + std::to_string(c.block.rows()) +
                                                  " rows, cannot keep " + std::to_string(n));
    auto keep = rng.sample_without_replacement(c.block.rows(), n);
    std::sort(keep.begin(), keep.end());
    FloatBlock block(0, archive.dim());
    for (std::size_t r : keep) block.append_row(c.block.row(r));
    out.add_class(c.label, std::move(block));
  }
  return out;
}

}  // namespace gdc
