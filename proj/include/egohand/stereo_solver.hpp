#pragma once
// Stereo lifting of 2D joint evidence: confidence-weighted triangulation and
// the reprojection-guided iterative refinement loop
//
//   P(k+1) = P(k) + eta(k) * dP(k)
//
// where dP comes from a pluggable ResidualPredictor and the 2D targets are
// re-decoded from the evidence around the current reprojections at every
// iteration.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "egohand/camera.hpp"
#include "egohand/heatmap.hpp"

namespace egohand {

struct HandPose3D {
  std::array<Vec3, kNumJoints> joints{};
  JointMask valid{};

  static HandPose3D all_invalid();
  int valid_count() const;
};

using PoseDelta = std::array<Vec3, kNumJoints>;

/// Triangulates one joint. Each view contributes two linear equations scaled
/// by its confidence; the 4x3 system is solved in least squares. Returns
/// nullopt when the system is rank deficient (condition number > 1e12),
/// which covers zero confidence in either view and near-parallel rays.
std::optional<Vec3> triangulate_point(const Vec2& u_left, const Vec2& u_right, double conf_left, double conf_right,
                                      const StereoRig& rig);

HandPose3D triangulate(const Keypoints2D& u_left, const Keypoints2D& u_right, std::span<const double> conf_left,
                       std::span<const double> conf_right, const StereoRig& rig);
HandPose3D triangulate(const DecodedKeypoints2D& left, const DecodedKeypoints2D& right, const StereoRig& rig);

struct Reprojection {
  Keypoints2D left{};
  Keypoints2D right{};
  /// [joint][view]; false for invalid joints and for views where the joint
  /// sits behind the camera (coordinates are NaN there).
  std::array<std::array<bool, 2>, kNumJoints> in_front{};
};

Reprojection reproject_all(const HandPose3D& pose, const StereoRig& rig);

struct TraceRecord {
  int iteration = 0;            // 1-based
  double mean_err_left_px = 0;  // confidence-weighted, per view
  double mean_err_right_px = 0;
  double mean_err_px = 0;       // both views; non-increasing with backtracking
  double step_norm_mm = 0;      // Frobenius norm of the applied update
};

struct RefinementState {
  HandPose3D pose;
  int iteration = 0;
  double initial_err_px = 0;  // error of the initial pose against the first targets
  TraceRecord initial;        // iteration 0: the same error split per view, no step
  std::vector<TraceRecord> trace;
};

enum class PredictorKind { GaussNewton, Oracle };

const char* to_string(PredictorKind kind);
PredictorKind predictor_kind_from_string(const std::string& name);

struct RefinementConfig {
  int n_iters = 3;
  /// eta per iteration; empty means 1.0 throughout, a short list repeats its
  /// last entry. Every entry must lie in (0, 1].
  std::vector<double> step_ratio;
  bool backtracking = true;
  int max_halvings = 8;
  PredictorKind predictor = PredictorKind::GaussNewton;
  /// Evidence patch half-size in heatmap nodes; the patch is (2r+1)^2.
  int patch_radius = 8;
  double temperature = kDefaultSoftArgmaxTemperature;
  /// Sensor pixels per heatmap node.
  double downscale = 1.0;

  double eta(int k) const;
  void validate() const;
};

/// Supplies per-view 2D targets given the current reprojections.
class EvidenceSource {
 public:
  virtual ~EvidenceSource() = default;
  virtual DecodedKeypoints2D decode(const Keypoints2D& reprojection,
                                    const std::array<bool, kNumJoints>& usable) const = 0;
};

/// Samples a (2r+1)^2 node patch around each reprojection (anchored at the
/// nearest node) through bilinear_sample and decodes it with soft_argmax.
class HeatmapEvidence : public EvidenceSource {
 public:
  HeatmapEvidence(const HeatmapStack& stack, double downscale, int patch_radius, double temperature);
  DecodedKeypoints2D decode(const Keypoints2D& reprojection,
                            const std::array<bool, kNumJoints>& usable) const override;

 private:
  const HeatmapStack& stack_;
  double downscale_;
  int radius_;
  double temperature_;
};

/// Fixed targets regardless of the current estimate (e.g. labelled 2D).
class FixedEvidence : public EvidenceSource {
 public:
  explicit FixedEvidence(DecodedKeypoints2D targets) : targets_(std::move(targets)) {}
  DecodedKeypoints2D decode(const Keypoints2D&, const std::array<bool, kNumJoints>& usable) const override;

 private:
  DecodedKeypoints2D targets_;
};

class ResidualPredictor {
 public:
  virtual ~ResidualPredictor() = default;
  /// Must return finite deltas, zero for joints with no confidence in either view.
  virtual PoseDelta predict(const RefinementState& state, const DecodedKeypoints2D& left,
                            const DecodedKeypoints2D& right, const StereoRig& rig) const = 0;
};

inline constexpr double kGaussNewtonDamping = 1e-6;

/// One damped Gauss-Newton step for a single joint on
///   sum_v c_v |pi_v(P) - target_v|^2
/// using the pinhole part of the projection Jacobian. Zero when the normal
/// equations are singular or no view carries confidence.
Vec3 gauss_newton_step(const Vec3& point, const Vec2& target_left, double conf_left, const Vec2& target_right,
                       double conf_right, const StereoRig& rig);

PoseDelta gauss_newton_residual(const RefinementState& state, const DecodedKeypoints2D& left,
                                const DecodedKeypoints2D& right, const StereoRig& rig);

class GaussNewtonPredictor : public ResidualPredictor {
 public:
  PoseDelta predict(const RefinementState& state, const DecodedKeypoints2D& left, const DecodedKeypoints2D& right,
                    const StereoRig& rig) const override {
    return gauss_newton_residual(state, left, right, rig);
  }
};

/// Returns ground truth minus the current estimate.
class OraclePredictor : public ResidualPredictor {
 public:
  explicit OraclePredictor(HandPose3D ground_truth) : gt_(std::move(ground_truth)) {}
  PoseDelta predict(const RefinementState& state, const DecodedKeypoints2D& left, const DecodedKeypoints2D& right,
                    const StereoRig& rig) const override;

 private:
  HandPose3D gt_;
};

RefinementState refine(const HandPose3D& init, const EvidenceSource& left, const EvidenceSource& right,
                       const StereoRig& rig, const RefinementConfig& cfg, const ResidualPredictor& predictor);

/// Heatmap-driven refinement. Throws DimensionMismatch unless each grid,
/// scaled by cfg.downscale, covers its camera's image.
RefinementState refine(const HandPose3D& init, const HeatmapStack& left, const HeatmapStack& right,
                       const StereoRig& rig, const RefinementConfig& cfg, const ResidualPredictor& predictor);

/// Convenience overload building the predictor from cfg.predictor; the
/// oracle needs `ground_truth`.
RefinementState refine(const HandPose3D& init, const HeatmapStack& left, const HeatmapStack& right,
                       const StereoRig& rig, const RefinementConfig& cfg,
                       const HandPose3D* ground_truth = nullptr);

/// "iteration,mean_err_L_px,mean_err_R_px,step_norm_mm" rows with a header,
/// starting at iteration 0 when any iteration ran.
std::string trace_to_text(const RefinementState& state);

}  // namespace egohand
