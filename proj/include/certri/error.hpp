#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace certri {

enum class ErrorCode {
  DegenerateDepth,
  CoincidentCenters,
  DegenerateConfiguration,
  DehomogenizationFailure,
  ConfigInvalid,
  ThresholdInvalid,
  EigenFailure,
  DimensionMismatch,
  NotNoiseFree,
  NotComplementary,
  NormalizationFailure,
  AllOutliers,
  RankAmbiguity,
  TooManyViews,
  NumericalBreakdown,
  ParseError,
  IoError,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateDepth: return "DegenerateDepth";
    case ErrorCode::CoincidentCenters: return "CoincidentCenters";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::DehomogenizationFailure: return "DehomogenizationFailure";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ThresholdInvalid: return "ThresholdInvalid";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotNoiseFree: return "NotNoiseFree";
    case ErrorCode::NotComplementary: return "NotComplementary";
    case ErrorCode::NormalizationFailure: return "NormalizationFailure";
    case ErrorCode::AllOutliers: return "AllOutliers";
    case ErrorCode::RankAmbiguity: return "RankAmbiguity";
    case ErrorCode::TooManyViews: return "TooManyViews";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; the code identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace certri
