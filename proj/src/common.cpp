#include "egohand/common.hpp"

namespace egohand {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedRecord: return "TruncatedRecord";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::OutOfBoundsPixel: return "OutOfBoundsPixel";
    case ErrorCode::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::Io: return "Io";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::MissingWrist: return "MissingWrist";
    case ErrorCode::JointCountMismatch: return "JointCountMismatch";
    case ErrorCode::OutOfFrustum: return "OutOfFrustum";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::UndistortDivergence: return "UndistortDivergence";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
  }
  return "Unknown";
}

bool is_numeric_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera:
    case ErrorCode::NonPositiveDepth:
    case ErrorCode::UndistortDivergence:
    case ErrorCode::DegenerateConfiguration:
      return true;
    default:
      return false;
  }
}

}  // namespace egohand
