#pragma once

#include <stdexcept>
#include <string>

namespace gfrag {

enum class ErrorCode {
  kConfig,
  kTargetOutOfRange,
  kEmptyTruncation,
  kQuadratureFailure,
  kBadLayout,
  kNoConvergence,
  kNonPositiveEigenvector,
  kBracketViolation,
  kDegenerateWindow,
  kFlowFailure,
  kQuadratureUnstable,
  kCFLViolation,
  kNegativeDensity,
  kDomainTooSmall,
  kSpectrumFailure,
  kNoRoot,
  kEigenFailure,
  kWrongKernel,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gfrag
