#pragma once

#include <stdexcept>
#include <string>

namespace lvcal {

enum class ErrorCode {
  AngleNearPi,
  OutOfInterval,
  ObservationOutOfSpan,
  InvalidArgument,
  SingularWeight,
  NonpositiveDt,
  UnknownStateId,
  IndefiniteSystem,
  BlockMismatch,
  DivergenceDetected,
  InsufficientData,
  InfeasibleSpec,
  TooFewSubmaps,
  EmptyReport,
  SchemaViolation,
  NonOrthonormalRotation,
  IoError,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; the code tells callers (and the CLI
// exit-code mapping) which failure occurred.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::OutOfInterval: return "OutOfInterval";
    case ErrorCode::ObservationOutOfSpan: return "ObservationOutOfSpan";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularWeight: return "SingularWeight";
    case ErrorCode::NonpositiveDt: return "NonpositiveDt";
    case ErrorCode::UnknownStateId: return "UnknownStateId";
    case ErrorCode::IndefiniteSystem: return "IndefiniteSystem";
    case ErrorCode::BlockMismatch: return "BlockMismatch";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::TooFewSubmaps: return "TooFewSubmaps";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::NonOrthonormalRotation: return "NonOrthonormalRotation";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace lvcal
