#include "egohand/losses.hpp"

#include <algorithm>
#include <cmath>

#include "egohand/simd/kernels.hpp"

namespace egohand {

double smooth_l1(std::span<const double> pred, std::span<const double> gt, double beta) {
  if (!(beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be positive");
  if (pred.size() != gt.size()) throw Error(ErrorCode::ShapeMismatch, "smooth_l1 inputs differ in length");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = std::abs(pred[i] - gt[i]);
    sum += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  return sum / pred.size();
}

double smooth_l1(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask, double beta) {
  std::vector<double> a, b;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!mask[j]) continue;
    for (int c = 0; c < 3; ++c) {
      a.push_back(pred.joints[j][c]);
      b.push_back(gt.joints[j][c]);
    }
  }
  if (a.empty()) throw Error(ErrorCode::EmptyMask, "no joints selected by the mask");
  return smooth_l1(a, b, beta);
}

double heatmap_mse(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size() || pred.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "heatmap shapes differ or are empty");
  }
  return simd::kernels().sum_squared_diff(pred.data(), target.data(), pred.size()) / pred.size();
}

double heatmap_mse(const HeatmapStack& pred, const HeatmapStack& target) {
  if (pred.joints != target.joints || pred.width != target.width || pred.height != target.height) {
    throw Error(ErrorCode::ShapeMismatch, "heatmap stacks differ in shape");
  }
  return heatmap_mse(pred.values, target.values);
}

namespace {
double clamp_prob(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }
}  // namespace

double bce_seg(std::span<const float> pred_prob, std::span<const float> target_mask) {
  if (pred_prob.size() != target_mask.size() || pred_prob.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "segmentation grids differ or are empty");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_prob.size(); ++i) {
    const double p = clamp_prob(pred_prob[i]);
    const double y = target_mask[i];
    sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return sum / pred_prob.size();
}

double cross_entropy(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " outside [0, " +
                                                std::to_string(probs.size()) + ")");
  }
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorCode::InvalidArgument, "probabilities must be finite, >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw Error(ErrorCode::InvalidArgument, "probabilities must sum to one");
  return -std::log(clamp_prob(probs[label] / total));
}

LossWeights LossWeights::with_default_schedule(int n_iters) {
  if (n_iters < 0) throw Error(ErrorCode::InvalidArgument, "iteration count must be >= 0");
  LossWeights w;
  for (int k = 1; k <= n_iters; ++k) {
    w.w2d.push_back(static_cast<double>(k) / n_iters);
    w.w3d.push_back(static_cast<double>(k) / n_iters);
  }
  return w;
}

void LossWeights::validate() const {
  for (double l : {lambda_hms, lambda_seg, lambda_act, lambda_3d}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorCode::InvalidArgument, "loss weights must be finite, >= 0");
  }
  if (w2d.size() != w3d.size()) throw Error(ErrorCode::ShapeMismatch, "w2d and w3d differ in length");
  for (const auto* s : {&w2d, &w3d}) {
    for (std::size_t k = 0; k < s->size(); ++k) {
      if (!((*s)[k] >= 0.0) || !std::isfinite((*s)[k])) {
        throw Error(ErrorCode::InvalidArgument, "iteration weights must be finite, >= 0", k);
      }
      if (k > 0 && (*s)[k] < (*s)[k - 1]) {
        throw Error(ErrorCode::InvalidArgument, "iteration weights must be non-decreasing", k);
      }
    }
  }
}

namespace {

double iteration_sum(std::span<const double> iter_2d, std::span<const double> iter_3d, const LossWeights& w) {
  if (iter_2d.size() != w.w2d.size() || iter_3d.size() != w.w3d.size()) {
    throw Error(ErrorCode::ShapeMismatch, "per-iteration losses do not match the weight schedule");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < iter_2d.size(); ++k) s += w.w2d[k] * iter_2d[k] + w.w3d[k] * iter_3d[k];
  return s;
}

}  // namespace

double loss_2d(double hms, double seg, const LossWeights& w) { return w.lambda_hms * hms + w.lambda_seg * seg; }

double loss_bev(double final_3d, std::span<const double> iter_2d, std::span<const double> iter_3d,
                const LossWeights& w) {
  return w.lambda_3d * final_3d + iteration_sum(iter_2d, iter_3d, w);
}

double loss_total(double hms, double seg, double act, std::span<const double> iter_2d,
                  std::span<const double> iter_3d, const LossWeights& w) {
  return w.lambda_hms * hms + w.lambda_seg * seg + w.lambda_act * act + iteration_sum(iter_2d, iter_3d, w);
}

}  // namespace egohand
