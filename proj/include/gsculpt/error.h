#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gsculpt {

enum class ErrorCode {
  kIoFailure,
  kMalformedHeader,
  kMissingProperty,
  kNonFiniteAttribute,
  kEmptyScene,
  kNonOrthonormalRotation,
  kDuplicateViewId,
  kBadIntrinsics,
  kBadClick,
  kEmptyResult,
  kInvalidArgument,
  kMissingLabels,
  kSelectionMismatch,
  kSingularIntrinsics,
  kDegenerateEpipole,
  kRayBehindCamera,
  kEmptySegment,
  kDimensionMismatch,
  kEmptySelection,
  kNonPositiveEpsilon,
  kWouldEmptyScene,
  kEditorUnavailable,
  kRemoteUnavailable,
  kNoPositiveClick,
  kSpecInfeasible,
  kUnknownView,
};

std::string_view ErrorCodeName(ErrorCode code);

// Single exception type for the library. Callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gsculpt
