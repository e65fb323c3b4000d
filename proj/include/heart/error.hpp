#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace heart
{

/// Error classes raised by the library. Every thrown heart::Error carries one.
enum class ErrorCode {
  // geometry
  NearZeroVector,
  AntipodalPoints,
  TangentNotAtBase,
  DimMismatch,
  // I/O
  SinkFailure,
  SourceFailure,
  BadMagic,
  TruncatedPayload,
  DimensionMismatch,
  InvalidIndices,
  NonFiniteData,
  UnknownTypeTag,
  SchemaViolation,
  // fitting
  DegenerateMean,
  EmptyComponent,
  PreconditionViolated,
  // anchors / editing
  BadTemplate,
  MissingRoleIndex,
  CoincidentAnchors,
  InvalidPlan,
  // probes
  EmptyInput,
  NonPositiveScale,
  EmptyVocab,
  MisalignedSequences,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
  switch (code) {
    case ErrorCode::NearZeroVector: return "NearZeroVector";
    case ErrorCode::AntipodalPoints: return "AntipodalPoints";
    case ErrorCode::TangentNotAtBase: return "TangentNotAtBase";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::SinkFailure: return "SinkFailure";
    case ErrorCode::SourceFailure: return "SourceFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidIndices: return "InvalidIndices";
    case ErrorCode::NonFiniteData: return "NonFiniteData";
    case ErrorCode::UnknownTypeTag: return "UnknownTypeTag";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DegenerateMean: return "DegenerateMean";
    case ErrorCode::EmptyComponent: return "EmptyComponent";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::BadTemplate: return "BadTemplate";
    case ErrorCode::MissingRoleIndex: return "MissingRoleIndex";
    case ErrorCode::CoincidentAnchors: return "CoincidentAnchors";
    case ErrorCode::InvalidPlan: return "InvalidPlan";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NonPositiveScale: return "NonPositiveScale";
    case ErrorCode::EmptyVocab: return "EmptyVocab";
    case ErrorCode::MisalignedSequences: return "MisalignedSequences";
  }
  return "Unknown";
}

/// I/O failures are reported with a distinct exit status by the CLI.
constexpr bool is_io_error(ErrorCode code) noexcept
{
  return code == ErrorCode::SinkFailure || code == ErrorCode::SourceFailure;
}

/**
 * Library exception. The message names the operation and the offending
 * parameter, e.g. "slerp: AntipodalPoints (theta=3.14159)".
 */
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, std::string_view operation, const std::string& detail)
    : std::runtime_error(std::string(operation) + ": " + std::string(to_string(code)) +
                         (detail.empty() ? std::string{} : " (" + detail + ")")),
      code_{code},
      operation_{operation}
  {
  }

  ErrorCode code() const noexcept { return code_; }
  const std::string& operation() const noexcept { return operation_; }

private:
  ErrorCode code_;
  std::string operation_;
};

}  // namespace heart
