#pragma once

// Fitted model file ("GDCM"), little-endian:
//   "GDCM" | version u16 = 1 | d u32 | k u32 | eps f64
//   per class: label_len u16 | label | prior f64 | n_ref u32 | mean d*f64
//              | W packed lower triangle d(d+1)/2*f64 | log_det_cov f64

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gdc/archive.hpp"
#include "gdc/error.hpp"
#include "gdc/gmm.hpp"
#include "gdc/linalg.hpp"

namespace gdc {

inline constexpr std::uint16_t kModelFormatVersion = 1;

namespace detail {

inline void write_f64_values(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
  } else {
    for (double v : values) put_le(out, v);
  }
}

inline std::vector<double> read_f64_values(ByteReader& r, std::size_t count, const std::string& what) {
  const std::size_t at = r.offset();
  std::vector<char> raw(count * 8);
  r.read(raw.data(), raw.size(), what);
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[8 * i + b])) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
    if (!std::isfinite(values[i])) throw FormatError(ErrorKind::NonFinite, at + 8 * i, "non-finite value in " + what);
  }
  return values;
}

}  // namespace detail

inline void write_model(const GdcModel& model, std::ostream& out) {
  const double eps = model[0].eps();
  for (const auto& c : model.components())
    if (std::bit_cast<std::uint64_t>(c.eps()) != std::bit_cast<std::uint64_t>(eps))
      throw Error(ErrorKind::InvalidArgument, "model file stores one eps; components were fitted with different eps");
  out.write("GDCM", 4);
  detail::put_le<std::uint16_t>(out, kModelFormatVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.dim()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.size()));
  detail::put_le<double>(out, eps);
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& c = model[i];
    detail::put_label(out, c.label());
    detail::put_le<double>(out, model.priors()[i]);
    detail::put_le<std::uint32_t>(out, c.n_ref());
    detail::write_f64_values(out, c.mean());
    detail::write_f64_values(out, c.inv_factor().packed());
    detail::put_le<double>(out, c.log_det_cov());
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing model");
}

inline void write_model(const GdcModel& model, const std::string& path) {
  auto out = detail::open_out(path);
  write_model(model, out);
}

inline GdcModel read_model(std::istream& in) {
  detail::ByteReader r(in);
  detail::check_magic(r, "GDCM");
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kModelFormatVersion)
    throw FormatError(ErrorKind::UnsupportedVersion, version_at, "model format version " + std::to_string(version));
  const std::size_t dim_at = r.offset();
  const auto d = r.get<std::uint32_t>("dimension");
  if (d == 0) throw FormatError(ErrorKind::DimensionMismatch, dim_at, "dimension is zero");
  const std::size_t k_at = r.offset();
  const auto k = r.get<std::uint32_t>("class count");
  if (k == 0) throw FormatError(ErrorKind::EmptyInput, k_at, "class count is zero");
  const std::size_t eps_at = r.offset();
  const auto eps = r.get<double>("eps");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw FormatError(ErrorKind::InvalidArgument, eps_at, "eps is invalid");

  std::vector<ClassGaussian> components;
  std::vector<double> priors;
  components.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::size_t class_at = r.offset();
    const auto len = r.get<std::uint16_t>("label length");
    if (len == 0) throw FormatError(ErrorKind::InvalidArgument, class_at, "empty class label");
    std::string label = r.get_string(len, "class label");
    const std::string what = "class '" + label + "'";
    const std::size_t prior_at = r.offset();
    const auto prior = r.get<double>("prior of " + what);
    if (!(prior >= 0.0) || !std::isfinite(prior))
      throw FormatError(ErrorKind::NegativePrior, prior_at, "invalid prior for " + what);
    const auto n_ref = r.get<std::uint32_t>("n_ref of " + what);
    auto mean = detail::read_f64_values(r, d, "mean of " + what);
    const std::size_t w_at = r.offset();
    auto w = detail::read_f64_values(r, linalg::packed_size(d), "factor of " + what);
    const std::size_t logdet_at = r.offset();
    const auto log_det = r.get<double>("log determinant of " + what);
    if (!std::isfinite(log_det)) throw FormatError(ErrorKind::NonFinite, logdet_at, "non-finite log determinant");
    try {
      components.emplace_back(i, std::move(label), std::move(mean), linalg::LowerTriangular(d, std::move(w)), log_det,
                              n_ref, eps);
    } catch (const Error& e) {
      throw FormatError(e.kind(), w_at, what + ": " + e.detail());
    }
    priors.push_back(prior);
  }
  try {
    return GdcModel(std::move(components), std::move(priors));
  } catch (const Error& e) {
    throw FormatError(e.kind(), r.offset(), e.detail());
  }
}

inline GdcModel read_model(const std::string& path) {
  auto in = detail::open_in(path);
  return read_model(in);
}

}  // namespace gdc
