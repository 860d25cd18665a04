#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vfharm {

enum class ErrorKind {
  NonPositiveFrequency,
  DomainExceeded,
  InsufficientHistory,
  InvalidRegime,
  QuadratureFailure,
  GridTooCoarse,
  BandExceedsTruncation,
  DimensionMismatch,
  SingularFrequencyOperator,
  NotHermitian,
  DuplicateHarmonic,
  SolverFailure,
  Infeasible,
  PosdefCheckFailed,
  NonToeplitzResidual,
  VerificationFailed,
  TruncationTooSmall,
  FixedPointDiverged,
  NonPositiveS44,
  IntegrationBlewUp,
  WindowUnavailable,
  ConfigError,
  MissingArtifact,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::NonPositiveFrequency: return "NonPositiveFrequency";
    case ErrorKind::DomainExceeded: return "DomainExceeded";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::InvalidRegime: return "InvalidRegime";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::BandExceedsTruncation: return "BandExceedsTruncation";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingularFrequencyOperator: return "SingularFrequencyOperator";
    case ErrorKind::NotHermitian: return "NotHermitian";
    case ErrorKind::DuplicateHarmonic: return "DuplicateHarmonic";
    case ErrorKind::SolverFailure: return "SolverFailure";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::PosdefCheckFailed: return "PosdefCheckFailed";
    case ErrorKind::NonToeplitzResidual: return "NonToeplitzResidual";
    case ErrorKind::VerificationFailed: return "VerificationFailed";
    case ErrorKind::TruncationTooSmall: return "TruncationTooSmall";
    case ErrorKind::FixedPointDiverged: return "FixedPointDiverged";
    case ErrorKind::NonPositiveS44: return "NonPositiveS44";
    case ErrorKind::IntegrationBlewUp: return "IntegrationBlewUp";
    case ErrorKind::WindowUnavailable: return "WindowUnavailable";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace vfharm
