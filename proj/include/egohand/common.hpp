#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace egohand {

inline constexpr int kJointsPerHand = 21;
inline constexpr int kNumJoints = 2 * kJointsPerHand;  // left hand 0-20, right hand 21-41
inline constexpr int kWristJoint = 0;                  // per-hand index
inline constexpr int kMiddleMcpJoint = 9;              // per-hand index

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using Keypoints2D = std::array<Vec2, kNumJoints>;
using JointMask = std::array<bool, kNumJoints>;

/// Microseconds since stream epoch.
using Microseconds = std::uint64_t;

enum class ErrorCode {
  // parsing / data
  MalformedHeader,
  TruncatedRecord,
  InvalidRecord,
  OutOfBoundsPixel,
  NonMonotonicTimestamp,
  InvalidArgument,
  DimensionMismatch,
  ShapeMismatch,
  MissingField,
  Io,
  LabelOutOfRange,
  EmptyMask,
  MissingWrist,
  JointCountMismatch,
  OutOfFrustum,
  InvalidCamera,
  // numeric
  BehindCamera,
  NonPositiveDepth,
  UndistortDivergence,
  DegenerateConfiguration,
};

const char* to_string(ErrorCode code);

/// True for the error codes that signal a numeric failure rather than bad input.
bool is_numeric_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  /// Offending record/joint index, when the error refers to one.
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

inline constexpr int hand_of(int joint) { return joint / kJointsPerHand; }
inline constexpr int joint_index(int hand, int local) { return hand * kJointsPerHand + local; }

}  // namespace egohand
