#include "cadloop/error.hpp"

namespace cadloop {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownMaterial: return "unknown_material";
    case ErrorCode::kUnknownCategory: return "unknown_category";
    case ErrorCode::kParamOutOfBounds: return "param_out_of_bounds";
    case ErrorCode::kDegenerateGeometry: return "degenerate_geometry";
    case ErrorCode::kMeshingFailure: return "meshing_failure";
    case ErrorCode::kNoFaceMatched: return "no_face_matched";
    case ErrorCode::kSingularSystem: return "singular_system";
    case ErrorCode::kNonConvergence: return "non_convergence";
    case ErrorCode::kEmptyField: return "empty_field";
    case ErrorCode::kMissingTemplate: return "missing_template";
    case ErrorCode::kInsufficientCategories: return "insufficient_categories";
    case ErrorCode::kTaskSynthesisFailed: return "task_synthesis_failed";
    case ErrorCode::kRegenerationFailure: return "regeneration_failure";
    case ErrorCode::kMalformedArgs: return "malformed_args";
    case ErrorCode::kUnknownTool: return "unknown_tool";
    case ErrorCode::kBudgetExhausted: return "budget_exhausted";
    case ErrorCode::kUnknownEpisode: return "unknown_episode";
    case ErrorCode::kEpisodeFinalized: return "episode_finalized";
    case ErrorCode::kMismatchedInputs: return "mismatched_inputs";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kParse: return "parse_error";
  }
  return "unknown";
}

}  // namespace cadloop
