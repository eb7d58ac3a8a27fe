#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gdc {

enum class ErrorKind {
  // numerical
  NotPositiveDefinite,
  ZeroDiagonal,
  ConvergenceFailure,
  // shape
  DimensionMismatch,
  LabelMismatch,
  // input
  InvalidArgument,
  EmptyClass,
  NonFinite,
  NegativePrior,
  DuplicateLabel,
  InsufficientRealSamples,
  TooFewSamples,
  ComponentCountOutOfRange,
  SampleTooSmall,
  SampleTooLarge,
  ConstantSample,
  MissingPlaceholder,
  EmptyInput,
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  Io,
};

inline std::string_view kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::ZeroDiagonal: return "ZeroDiagonal";
    case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LabelMismatch: return "LabelMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NegativePrior: return "NegativePrior";
    case ErrorKind::DuplicateLabel: return "DuplicateLabel";
    case ErrorKind::InsufficientRealSamples: return "InsufficientRealSamples";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::ComponentCountOutOfRange: return "ComponentCountOutOfRange";
    case ErrorKind::SampleTooSmall: return "SampleTooSmall";
    case ErrorKind::SampleTooLarge: return "SampleTooLarge";
    case ErrorKind::ConstantSample: return "ConstantSample";
    case ErrorKind::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Process exit code for an error kind: 3 numerical, 4 shape, 2 otherwise.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::ZeroDiagonal:
    case ErrorKind::ConvergenceFailure:
      return 3;
    case ErrorKind::DimensionMismatch:
    case ErrorKind::LabelMismatch:
      return 4;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// Factorization failure; `pivot()` is the zero-based row whose pivot was <= 0.
class NotPositiveDefiniteError : public Error {
 public:
  NotPositiveDefiniteError(std::size_t pivot, double value)
      : Error(ErrorKind::NotPositiveDefinite,
              "pivot " + std::to_string(pivot) + " is " + std::to_string(value)),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Malformed binary input; carries the byte offset where reading failed.
class FormatError : public Error {
 public:
  FormatError(ErrorKind kind, std::size_t offset, const std::string& what)
      : Error(kind, what + " at byte " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Rethrows `e` with `context` prepended to the message, preserving the kind.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  throw Error(e.kind(), context + ": " + e.detail());
}

}  // namespace gdc
