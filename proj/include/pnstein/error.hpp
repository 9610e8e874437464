#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pnstein {

enum class ErrorCode {
  NonPositiveSigma,
  CorrelationOutOfRange,
  InvalidCopyCount,
  NonPositiveArgument,
  Overflow,
  SingularPoint,
  NotConverged,
  CaseMismatch,
  DegenerateVariance,
  NotSquare,
  ParameterNotRational,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::CorrelationOutOfRange: return "CorrelationOutOfRange";
    case ErrorCode::InvalidCopyCount: return "InvalidCopyCount";
    case ErrorCode::NonPositiveArgument: return "NonPositiveArgument";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::SingularPoint: return "SingularPoint";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::CaseMismatch: return "CaseMismatch";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::NotSquare: return "NotSquare";
    case ErrorCode::ParameterNotRational: return "ParameterNotRational";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (notably the CLI) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pnstein
