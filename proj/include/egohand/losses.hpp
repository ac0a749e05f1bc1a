#pragma once
// Training-loss formulas evaluated as diagnostics (no gradients).

#include <span>
#include <vector>

#include "egohand/heatmap.hpp"
#include "egohand/stereo_solver.hpp"

namespace egohand {

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kDefaultSmoothL1Beta = 1.0;
inline constexpr int kNumGestureClasses = 38;

/// Mean over elements of 0.5 d^2 / beta for |d| < beta, |d| - 0.5 beta
/// otherwise. Throws InvalidArgument for beta <= 0, ShapeMismatch for
/// unequal lengths.
double smooth_l1(std::span<const double> pred, std::span<const double> gt, double beta = kDefaultSmoothL1Beta);
double smooth_l1(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask,
                 double beta = kDefaultSmoothL1Beta);

double heatmap_mse(const HeatmapStack& pred, const HeatmapStack& target);
double heatmap_mse(std::span<const float> pred, std::span<const float> target);

/// Mean binary cross-entropy; probabilities clamped to [1e-7, 1 - 1e-7].
double bce_seg(std::span<const float> pred_prob, std::span<const float> target_mask);

/// -ln p[label] after renormalizing `probs` by its sum and clamping.
/// Throws LabelOutOfRange and InvalidArgument (negative entries, or a sum
/// further than 1e-6 from one).
double cross_entropy(std::span<const double> probs, int label);

struct LossWeights {
  double lambda_hms = 0.05;
  double lambda_seg = 1.0;
  double lambda_act = 10.0;
  double lambda_3d = 0.5;
  std::vector<double> w2d;
  std::vector<double> w3d;

  /// w_k = k / n for both schedules.
  static LossWeights with_default_schedule(int n_iters);
  /// Throws InvalidArgument for negative weights, schedules of unequal
  /// length, or a decreasing schedule.
  void validate() const;
};

double loss_2d(double hms, double seg, const LossWeights& w);
double loss_bev(double final_3d, std::span<const double> iter_2d, std::span<const double> iter_3d,
                const LossWeights& w);
double loss_total(double hms, double seg, double act, std::span<const double> iter_2d,
                  std::span<const double> iter_3d, const LossWeights& w);

}  // namespace egohand
