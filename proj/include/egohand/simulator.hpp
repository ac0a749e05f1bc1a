#pragma once
// Synthetic two-hand scenes observed by a stereo event rig and a depth
// camera. Events are generated from the projected motion of each joint, so
// every output comes with exact ground truth.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "egohand/annotation.hpp"
#include "egohand/events.hpp"

namespace egohand {

/// offset(t) = amplitude * sin(2 pi frequency t + phase)
struct Oscillation {
  Vec3 amplitude = Vec3::Zero();  // mm
  double frequency_hz = 0.0;
  double phase = 0.0;  // rad

  Vec3 at(double t_seconds) const;
};

struct MotionSpec {
  Microseconds duration = 5'000'000;
  double frame_rate = 30.0;
  std::array<Vec3, kNumJoints> base{};  // world mm
  std::array<Oscillation, kNumJoints> articulation{};
  std::array<Oscillation, 2> translation{};  // per hand, added to all its joints
  std::uint64_t seed = 0;

  /// Throws InvalidArgument unless duration > 0, frame_rate > 0 and every
  /// parameter is finite with non-negative frequencies.
  void validate() const;
  /// Number of sampled frames: floor(duration * frame_rate).
  std::size_t frame_count() const;
  Microseconds frame_time(std::size_t k) const;
};

/// Continuous pose; every joint valid.
HandPose3D pose_at(const MotionSpec& spec, double t_seconds);

/// Samples the motion at the frame rate. Throws OutOfFrustum (index = joint)
/// if a joint leaves either camera's image or passes behind it.
HandPoseTrack synth_trajectory(const MotionSpec& spec, const StereoRig& rig);

struct EventRenderOptions {
  double contrast_step = 1.0;  // px of image-path length per event
  double noise_rate = 0.0;     // events / s / px, per sensor
  std::uint64_t seed = 0;
  Microseconds substep = 100;  // path tracing resolution
  unsigned threads = 1;
};

struct StereoEvents {
  EventStream left;
  EventStream right;
};

StereoEvents render_events(const MotionSpec& spec, const StereoRig& rig, const EventRenderOptions& options);
EventStream render_view_events(const MotionSpec& spec, const CameraModel& cam, const EventRenderOptions& options,
                               std::uint64_t stream_id);

struct DepthRenderOptions {
  int splat_radius = 3;        // px
  double hole_fraction = 0.0;  // probability that a pixel is carved out
  std::uint64_t seed = 0;
};

/// Splats each valid joint's camera-frame depth into a disk (nearest wins),
/// then carves seeded holes.
DepthMap render_depth(const HandPose3D& pose, const CameraModel& cam, const DepthRenderOptions& options,
                      std::uint32_t frame_id = 0);

/// Rig used by the default scenes: two 1280x720 event cameras 64 mm apart
/// with mild distortion and a 320x240 depth camera between them.
StereoRig default_rig();
CameraModel default_depth_camera();

enum class Lighting { Normal, Low };
enum class HandMode { Single, Bimanual };

const char* to_string(Lighting lighting);
const char* to_string(HandMode mode);
Lighting lighting_from_string(const std::string& name);
HandMode hand_mode_from_string(const std::string& name);

/// Per-pixel noise rate used for a lighting tier when none is given.
double default_noise_rate(Lighting lighting);

struct SceneConfig {
  std::uint64_t seed = 1;
  double duration_s = 5.0;
  double frame_rate = 30.0;
  Lighting lighting = Lighting::Normal;
  HandMode hands = HandMode::Bimanual;
  double contrast_step = 1.0;
  /// Overrides the lighting tier's noise rate (0 for noise-free scenes).
  std::optional<double> noise_rate;
  double depth_hole_fraction = 0.0;
  std::optional<int> label;

  double resolved_noise_rate() const { return noise_rate ? *noise_rate : default_noise_rate(lighting); }
  std::vector<std::string> tags() const;
};

/// Seeded two-hand motion: the base skeleton placed in front of the rig with
/// per-finger flexion and a slow drift of each hand. In Single mode the left
/// hand stays still.
MotionSpec make_motion(const SceneConfig& config);

struct SimOutput {
  SceneConfig config;
  MotionSpec spec;
  StereoRig rig;
  CameraModel depth_camera;
  HandPoseTrack track;                   // all joints Original
  std::vector<StereoAnnotation> views;   // per frame
  std::vector<DepthKeypointFrame> depth_keypoints;
  std::vector<DepthMap> depth;
  StereoEvents events;
};

SimOutput simulate(const SceneConfig& config, unsigned threads = 1);

struct ExportedFile {
  std::string role;
  std::string path;  // relative to the dataset directory
  std::uint64_t bytes = 0;
};

/// Writes events_left.evs, events_right.evs, calibration.json,
/// gt_annotation.json, kp2d.json, depth/NNNNNN.dpm and manifest.json.
/// Returns the manifest entries (manifest.json itself excluded).
std::vector<ExportedFile> export_dataset(const SimOutput& sim, const std::string& directory);

}  // namespace egohand
