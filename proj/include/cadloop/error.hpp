#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cadloop {

enum class ErrorCode {
  kUnknownMaterial,
  kUnknownCategory,
  kParamOutOfBounds,
  kDegenerateGeometry,
  kMeshingFailure,
  kNoFaceMatched,
  kSingularSystem,
  kNonConvergence,
  kEmptyField,
  kMissingTemplate,
  kInsufficientCategories,
  kTaskSynthesisFailed,
  kRegenerationFailure,
  kMalformedArgs,
  kUnknownTool,
  kBudgetExhausted,
  kUnknownEpisode,
  kEpisodeFinalized,
  kMismatchedInputs,
  kIo,
  kParse,
};

// Stable snake_case name used on the wire and in logs.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cadloop
