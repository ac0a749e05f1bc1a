#pragma once
// Pose evaluation: MPJPE, 2D error, Procrustes alignment, PCK/AUC, and the
// scenario-tagged evaluation report.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "egohand/stereo_solver.hpp"

namespace egohand {

inline constexpr double kPckMaxThresholdMm = 50.0;
inline constexpr int kDefaultPckThresholds = 100;

/// Mean Euclidean distance over joints with mask[j]. Throws EmptyMask.
double mpjpe(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask);
double mean_2d_error(const Keypoints2D& pred, const Keypoints2D& gt, const JointMask& mask);

enum class AlignMode { Similarity, Rigid };

struct SimilarityTransform {
  Mat3 R = Mat3::Identity();
  double scale = 1.0;
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (R * p) + t; }
};

/// Least-squares fit of gt ~ s R pred + t over masked joints (s = 1 for
/// Rigid). det(R) = +1 is enforced. Throws EmptyMask for fewer than three
/// masked joints and DegenerateConfiguration when the centered
/// cross-covariance has rank < 2.
SimilarityTransform procrustes_fit(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask,
                                   AlignMode mode = AlignMode::Similarity);

/// `pred` with the fitted transform applied to every joint.
HandPose3D procrustes_align(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask,
                            AlignMode mode = AlignMode::Similarity);

double pa_mpjpe(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask,
                AlignMode mode = AlignMode::Similarity);

struct PckCurve {
  std::vector<double> thresholds;
  std::vector<double> pck;
  double auc = 0.0;
};

/// Curve over `n_thresholds` uniform thresholds spanning [0, 50] mm inclusive
/// (n_thresholds >= 2) from a flat list of per-joint errors.
PckCurve pck_from_errors(std::span<const double> errors, int n_thresholds = kDefaultPckThresholds);
PckCurve pck_auc(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask,
                 int n_thresholds = kDefaultPckThresholds);

/// Joint mask from the validity of both poses.
JointMask joint_mask(const HandPose3D& pred, const HandPose3D& gt);

// ---------------------------------------------------------------------------
// Batch evaluation

struct FrameSample {
  HandPose3D pred;
  HandPose3D gt;
  JointMask mask{};
  /// 2D predictions and ground truth for both views; `mask_2d[v][j]` selects
  /// the joints entering the pixel error. Empty mask rows skip the view.
  Keypoints2D pred_2d[2]{};
  Keypoints2D gt_2d[2]{};
  JointMask mask_2d[2]{};
  std::vector<std::string> tags;
};

struct MetricRow {
  std::string name;
  std::size_t frames = 0;
  std::size_t joints = 0;
  double m2d_px = 0.0;   // NaN when no 2D joints were masked in
  double m3d_mm = 0.0;
  double pa_m3d_mm = 0.0;  // NaN when no frame could be aligned
  double pck_auc = 0.0;
  PckCurve curve;
};

struct EvaluationOptions {
  AlignMode align = AlignMode::Similarity;
  int n_thresholds = kDefaultPckThresholds;
  unsigned threads = 1;
};

struct EvaluationReport {
  MetricRow overall;
  std::vector<MetricRow> by_tag;  // sorted by tag name
};

/// Pools joints across frames for M-2D, M-3D and PCK; PA-MPJPE is computed
/// per frame (frames that cannot be aligned are skipped) and pooled per joint.
/// Throws EmptyMask when no 3D joint is masked in at all.
EvaluationReport evaluate(std::span<const FrameSample> samples, const EvaluationOptions& options = {});

/// Fixed-width table: rows "overall" and one per tag; columns frames, joints,
/// M-2D px, M-3D mm, PA-M3D mm, PCK-AUC.
std::string report_to_text(const EvaluationReport& report);

/// "threshold_mm\tpck" rows with a header; one column per report row.
std::string pck_curves_to_text(const EvaluationReport& report);

}  // namespace egohand
