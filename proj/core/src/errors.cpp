#include "gfrag/errors.hpp"

namespace gfrag {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kTargetOutOfRange: return "TargetOutOfRange";
    case ErrorCode::kEmptyTruncation: return "EmptyTruncation";
    case ErrorCode::kQuadratureFailure: return "QuadratureFailure";
    case ErrorCode::kBadLayout: return "BadLayout";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNonPositiveEigenvector: return "NonPositiveEigenvector";
    case ErrorCode::kBracketViolation: return "BracketViolation";
    case ErrorCode::kDegenerateWindow: return "DegenerateWindow";
    case ErrorCode::kFlowFailure: return "FlowFailure";
    case ErrorCode::kQuadratureUnstable: return "QuadratureUnstable";
    case ErrorCode::kCFLViolation: return "CFLViolation";
    case ErrorCode::kNegativeDensity: return "NegativeDensity";
    case ErrorCode::kDomainTooSmall: return "DomainTooSmall";
    case ErrorCode::kSpectrumFailure: return "SpectrumFailure";
    case ErrorCode::kNoRoot: return "NoRoot";
    case ErrorCode::kEigenFailure: return "EigenFailure";
    case ErrorCode::kWrongKernel: return "WrongKernel";
  }
  return "Error";
}

}  // namespace gfrag
