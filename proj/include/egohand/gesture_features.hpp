#pragma once
// Wrist-centric, palm-scaled stereo 2D feature vectors for gesture
// recognition, plus a nearest-centroid baseline classifier.
//
// Vector layout (168 values): four blocks of 21 joints x (x, y), in order
//   left view / left hand, left view / right hand,
//   right view / left hand, right view / right hand.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egohand/common.hpp"

namespace egohand {

inline constexpr int kFeatureDim = 2 * kNumJoints * 2;
inline constexpr double kPalmEpsilon = 1e-5;

using HandKeypoints2D = std::array<Vec2, kJointsPerHand>;
using FeatureVector = std::array<double, kFeatureDim>;

struct StereoPose2D {
  Keypoints2D view[2]{};
  /// Invalid non-wrist joints contribute zeros; an invalid wrist is an error.
  JointMask valid[2]{};

  static StereoPose2D all_valid(const Keypoints2D& left, const Keypoints2D& right);
};

/// Both views built from per-view joint lists; throws JointCountMismatch
/// unless each holds 42 entries.
StereoPose2D make_stereo_pose(std::span<const Vec2> left, std::span<const Vec2> right);

/// p_j - p_wrist for one hand.
HandKeypoints2D wrist_center(const HandKeypoints2D& hand);
/// Divides by |p_9| + 1e-5.
HandKeypoints2D scale_normalize(const HandKeypoints2D& centered);

/// Both steps applied to every hand of both views. Throws MissingWrist with
/// index 2*view + hand when a wrist is invalid or non-finite.
StereoPose2D wrist_center(const StereoPose2D& pose);
StereoPose2D scale_normalize(const StereoPose2D& centered);

FeatureVector frame_features(const StereoPose2D& pose);

struct NormalizedFrame {
  FeatureVector vector{};
  Microseconds t = 0;
};

struct GestureSequence {
  std::vector<NormalizedFrame> frames;
  std::optional<int> label;

  FeatureVector time_average() const;
};

/// Throws InvalidArgument for empty input, mismatched lengths or
/// non-increasing timestamps, LabelOutOfRange for labels outside [0, 38).
GestureSequence build_sequence(std::span<const StereoPose2D> poses, std::span<const Microseconds> timestamps,
                               std::optional<int> label = std::nullopt);

/// One "t_us,v0,...,v167" row per frame and an optional final "label,<c>".
std::string sequence_to_text(const GestureSequence& seq);
GestureSequence parse_sequence(const std::string& text);

/// Nearest class centroid over time-averaged feature vectors.
class CentroidClassifier {
 public:
  /// Throws InvalidArgument if any sequence is unlabelled or none are given.
  void fit(std::span<const GestureSequence> sequences);
  int predict(const GestureSequence& seq) const;
  std::size_t num_classes() const { return labels_.size(); }

  /// Fraction of sequences classified correctly when each is held out in
  /// turn; sequences whose class has no other member count as misses.
  static double leave_one_out_accuracy(std::span<const GestureSequence> sequences);

 private:
  std::vector<int> labels_;
  std::vector<FeatureVector> centroids_;
};

}  // namespace egohand
