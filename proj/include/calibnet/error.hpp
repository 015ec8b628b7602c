#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace calibnet {

enum class ErrorKind {
  DegenerateGain,
  InvalidSize,
  MissingNoiseModel,
  DimensionMismatch,
  IndexOutOfRange,
  DuplicateReference,
  InconsistentConstraints,
  SingularKkt,
  DegenerateData,
  DegenerateNoise,
  ConstantPhenomenon,
  UnresolvedAmbiguity,
  InvalidConfig,
  EmptyInput,
  ParseError,
  TooFewRows,
  NonNumericCell,
  UnknownSensorId,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateGain: return "DegenerateGain";
    case ErrorKind::InvalidSize: return "InvalidSize";
    case ErrorKind::MissingNoiseModel: return "MissingNoiseModel";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DuplicateReference: return "DuplicateReference";
    case ErrorKind::InconsistentConstraints: return "InconsistentConstraints";
    case ErrorKind::SingularKkt: return "SingularKkt";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::DegenerateNoise: return "DegenerateNoise";
    case ErrorKind::ConstantPhenomenon: return "ConstantPhenomenon";
    case ErrorKind::UnresolvedAmbiguity: return "UnresolvedAmbiguity";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::TooFewRows: return "TooFewRows";
    case ErrorKind::NonNumericCell: return "NonNumericCell";
    case ErrorKind::UnknownSensorId: return "UnknownSensorId";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. The kind is stable and machine-checkable;
/// the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace calibnet
