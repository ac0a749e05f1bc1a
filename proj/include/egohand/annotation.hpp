#pragma once
// Label generation from depth-anchored 2D keypoints: lift to 3D with depth
// hole filling, interpolate short gaps in 3D, and project the dense track
// into both event cameras.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egohand/camera.hpp"
#include "egohand/stereo_solver.hpp"

namespace egohand {

inline constexpr int kDefaultFillWindow = 5;
inline constexpr int kDefaultMaxGap = 5;

/// Depth in mm, 0 = missing.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::uint32_t frame_id = 0;
  std::vector<double> values;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

enum class VisibilityFlag : char { Original = 'O', Interpolated = 'I', Invalid = 'X' };
using JointFlags = std::array<VisibilityFlag, kNumJoints>;

struct TrackFrame {
  std::int64_t frame_id = 0;
  Microseconds t = 0;
  HandPose3D pose;
  JointFlags flags{};
};

struct HandPoseTrack {
  std::vector<TrackFrame> frames;

  /// Throws InvalidArgument unless timestamps strictly increase and every
  /// flag agrees with joint validity (Invalid <=> !valid).
  void validate() const;
};

/// Direct depth at round(u) if nonzero, else the mean of the nonzero depths in
/// the window x window neighborhood; nullopt if there are none.
std::optional<double> fill_depth(const DepthMap& depth, const Vec2& u, int window = kDefaultFillWindow);

struct LiftedPose {
  HandPose3D pose;
  JointFlags flags{};
};

/// Lifts depth-camera keypoints to world 3D. Non-finite keypoints and
/// missing depth yield Invalid joints.
LiftedPose lift_keypoints(const Keypoints2D& keypoints, const DepthMap& depth, const CameraModel& cam,
                          int window = kDefaultFillWindow);

/// Fills runs of at most max_gap Invalid frames bounded by valid frames on
/// both sides (per joint, linear in time). Other joints are untouched.
HandPoseTrack interpolate_track(const HandPoseTrack& track, int max_gap = kDefaultMaxGap);

enum class ViewFlag : char { Visible = 'V', OutOfImage = 'O', BehindCamera = 'B', Absent = 'X' };

struct ViewAnnotation {
  Keypoints2D coords{};
  std::array<ViewFlag, kNumJoints> flags{};
};

struct StereoAnnotation {
  ViewAnnotation left;
  ViewAnnotation right;
};

/// Projects non-Invalid joints into one camera; Invalid joints are Absent.
ViewAnnotation project_view(const HandPose3D& pose, const JointFlags& flags, const CameraModel& cam);
StereoAnnotation project_frame(const TrackFrame& frame, const StereoRig& rig);
std::vector<StereoAnnotation> project_annotations(const HandPoseTrack& track, const StereoRig& rig);

struct AnnotationMetadata {
  std::vector<std::string> scenario;
  std::optional<int> label;
  std::map<std::string, std::string> extra;
};

/// Contents of an annotation (or prediction) file; `views` is empty or has
/// one entry per track frame.
struct Annotation {
  AnnotationMetadata metadata;
  HandPoseTrack track;
  std::vector<StereoAnnotation> views;
};

// Annotation file (JSON):
//   { "format": "egohand-annotation-v1",
//     "metadata": { "scenario": [...], "label": 3, ...string pairs },
//     "frames": [ { "frame_id": 0, "t_us": 0,
//                   "joints": [[X, Y, Z, "O"|"I"|"X"] x 42],
//                   "views": { "L": [[u, v, "V"|"O"|"B"|"X"] x 42], "R": [...] } } ] }
// Coordinates of Invalid/Absent entries are null.
std::string write_annotation(const Annotation& annotation);
Annotation parse_annotation(const std::string& text);
Annotation read_annotation_file(const std::string& path);
void write_annotation_file(const std::string& path, const Annotation& annotation);

/// 2D keypoints of one depth-camera frame plus the depth map they index.
struct DepthKeypointFrame {
  std::int64_t frame_id = 0;
  Microseconds t = 0;
  Keypoints2D keypoints{};  // NaN for joints without a detection
  std::string depth_file;   // relative to the kp2d file's directory
};

// kp2d file (JSON):
//   { "format": "egohand-kp2d-v1",
//     "frames": [ { "frame_id": 0, "t_us": 0, "depth": "depth/000000.dpm",
//                   "keypoints": [[u, v] or null x 42] } ] }
std::string write_kp2d(const std::vector<DepthKeypointFrame>& frames);
std::vector<DepthKeypointFrame> parse_kp2d(const std::string& text);

/// "DPM1" depth file: magic, u16 W, u16 H, u32 frame_id, W*H u16 LE mm.
std::vector<std::uint8_t> write_depth(const DepthMap& depth);
DepthMap parse_depth(std::span<const std::uint8_t> bytes);
DepthMap read_depth_file(const std::string& path);
void write_depth_file(const std::string& path, const DepthMap& depth);

}  // namespace egohand
