#include "egohand/stereo_solver.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

namespace egohand {
namespace {

constexpr double kMaxConditionNumber = 1e12;
// Error charged for a view whose target has confidence but whose
// projection falls behind the camera.
constexpr double kBehindCameraPenaltyPx = 1e6;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

struct JointTargets {
  Vec2 left;
  double conf_left;
  Vec2 right;
  double conf_right;
};

JointTargets targets_of(const DecodedKeypoints2D& l, const DecodedKeypoints2D& r, int j) {
  return {l.coords[j], l.confidence[j], r.coords[j], r.confidence[j]};
}

double usable_conf(double c) { return std::isfinite(c) && c > 0.0 ? c : 0.0; }

struct JointError {
  double left = 0.0;   // c_L * |r_L|
  double right = 0.0;  // c_R * |r_R|
  double total() const { return left + right; }
};

double view_error(const Vec3& p, const Vec2& target, double conf, const CameraModel& cam) {
  if (conf <= 0.0) return 0.0;
  const auto proj = try_project(p, cam);
  if (!proj || !target.allFinite()) return conf * kBehindCameraPenaltyPx;
  return conf * (proj->pixel - target).norm();
}

JointError joint_error(const Vec3& p, const JointTargets& t, const StereoRig& rig) {
  return {view_error(p, t.left, usable_conf(t.conf_left), rig.left()),
          view_error(p, t.right, usable_conf(t.conf_right), rig.right())};
}

// d(pixel)/d(world) for the undistorted pinhole model.
Eigen::Matrix<double, 2, 3> pinhole_jacobian(const Vec3& world, const CameraModel& cam) {
  const Vec3 pc = cam.to_camera(world);
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> d;
  d << cam.fx() * iz, 0.0, -cam.fx() * pc.x() * iz * iz,  //
      0.0, cam.fy() * iz, -cam.fy() * pc.y() * iz * iz;
  return d * cam.rotation();
}

}  // namespace

HandPose3D HandPose3D::all_invalid() {
  HandPose3D p;
  p.joints.fill(Vec3::Constant(kNaN));
  p.valid.fill(false);
  return p;
}

int HandPose3D::valid_count() const {
  int n = 0;
  for (bool v : valid) n += v ? 1 : 0;
  return n;
}

std::optional<Vec3> triangulate_point(const Vec2& u_left, const Vec2& u_right, double conf_left, double conf_right,
                                      const StereoRig& rig) {
  const double cl = usable_conf(conf_left);
  const double cr = usable_conf(conf_right);
  if (cl == 0.0 || cr == 0.0 || !u_left.allFinite() || !u_right.allFinite()) return std::nullopt;

  Eigen::Matrix<double, 4, 4> rows;
  auto add_view = [&](int r, const Vec2& pixel, double c, const CameraModel& cam) {
    const Vec2 n = pixel_to_normalized(pixel, cam);
    Eigen::Matrix<double, 3, 4> M;
    M << cam.rotation(), cam.translation();
    rows.row(r) = c * (n.x() * M.row(2) - M.row(0));
    rows.row(r + 1) = c * (n.y() * M.row(2) - M.row(1));
  };
  try {
    add_view(0, u_left, cl, rig.left());
    add_view(2, u_right, cr, rig.right());
  } catch (const Error&) {
    return std::nullopt;
  }

  const Eigen::Matrix<double, 4, 3> A = rows.leftCols<3>();
  const Eigen::Vector4d b = -rows.col(3);
  Eigen::JacobiSVD<Eigen::Matrix<double, 4, 3>> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s(2) > 0.0) || s(0) / s(2) > kMaxConditionNumber) return std::nullopt;
  const Vec3 x = svd.solve(b);
  if (!x.allFinite()) return std::nullopt;
  return x;
}

HandPose3D triangulate(const Keypoints2D& u_left, const Keypoints2D& u_right, std::span<const double> conf_left,
                       std::span<const double> conf_right, const StereoRig& rig) {
  if (conf_left.size() != kNumJoints || conf_right.size() != kNumJoints) {
    throw Error(ErrorCode::JointCountMismatch, "expected 42 confidences per view");
  }
  HandPose3D pose = HandPose3D::all_invalid();
  for (int j = 0; j < kNumJoints; ++j) {
    if (auto p = triangulate_point(u_left[j], u_right[j], conf_left[j], conf_right[j], rig)) {
      pose.joints[j] = *p;
      pose.valid[j] = true;
    }
  }
  return pose;
}

HandPose3D triangulate(const DecodedKeypoints2D& left, const DecodedKeypoints2D& right, const StereoRig& rig) {
  return triangulate(left.coords, right.coords, left.confidence, right.confidence, rig);
}

Reprojection reproject_all(const HandPose3D& pose, const StereoRig& rig) {
  Reprojection out;
  for (int j = 0; j < kNumJoints; ++j) {
    out.left[j] = out.right[j] = Vec2::Constant(kNaN);
    out.in_front[j] = {false, false};
    if (!pose.valid[j] || !pose.joints[j].allFinite()) continue;
    if (auto p = try_project(pose.joints[j], rig.left())) {
      out.left[j] = p->pixel;
      out.in_front[j][0] = true;
    }
    if (auto p = try_project(pose.joints[j], rig.right())) {
      out.right[j] = p->pixel;
      out.in_front[j][1] = true;
    }
  }
  return out;
}

const char* to_string(PredictorKind kind) { return kind == PredictorKind::GaussNewton ? "gauss_newton" : "oracle"; }

PredictorKind predictor_kind_from_string(const std::string& name) {
  if (name == "gauss_newton") return PredictorKind::GaussNewton;
  if (name == "oracle") return PredictorKind::Oracle;
  throw Error(ErrorCode::InvalidArgument, "unknown predictor '" + name + "' (expected gauss_newton|oracle)");
}

double RefinementConfig::eta(int k) const {
  if (step_ratio.empty()) return 1.0;
  return step_ratio[std::min<std::size_t>(static_cast<std::size_t>(k), step_ratio.size() - 1)];
}

void RefinementConfig::validate() const {
  if (n_iters < 0) throw Error(ErrorCode::InvalidArgument, "n_iters must be >= 0");
  for (double e : step_ratio) {
    if (!(e > 0.0 && e <= 1.0)) throw Error(ErrorCode::InvalidArgument, "step ratios must lie in (0, 1]");
  }
  if (max_halvings < 0) throw Error(ErrorCode::InvalidArgument, "max_halvings must be >= 0");
  if (patch_radius < 1) throw Error(ErrorCode::InvalidArgument, "patch_radius must be >= 1");
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  if (!(downscale > 0.0)) throw Error(ErrorCode::InvalidArgument, "downscale must be positive");
}

HeatmapEvidence::HeatmapEvidence(const HeatmapStack& stack, double downscale, int patch_radius, double temperature)
    : stack_(stack), downscale_(downscale), radius_(patch_radius), temperature_(temperature) {
  if (stack.joints != kNumJoints) throw Error(ErrorCode::JointCountMismatch, "expected 42 heatmap channels");
}

DecodedKeypoints2D HeatmapEvidence::decode(const Keypoints2D& reprojection,
                                           const std::array<bool, kNumJoints>& usable) const {
  DecodedKeypoints2D out;
  const int side = 2 * radius_ + 1;
  std::vector<float> patch(static_cast<std::size_t>(side) * side);
  double sample = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    out.coords[j] = Vec2::Constant(kNaN);
    out.confidence[j] = 0.0;
    if (!usable[j] || !reprojection[j].allFinite()) continue;
    const Vec2 node = reprojection[j] / downscale_;
    if (std::abs(node.x()) > 1e6 || std::abs(node.y()) > 1e6) continue;
    const Vec2 anchor(std::round(node.x()), std::round(node.y()));
    const GridView grid{stack_.channel(j), stack_.width, stack_.height, 1};
    for (int dy = -radius_; dy <= radius_; ++dy) {
      for (int dx = -radius_; dx <= radius_; ++dx) {
        const Vec2 u_hat = grid_to_normalized(anchor + Vec2(dx, dy), stack_.width, stack_.height);
        bilinear_sample(grid, u_hat, std::span<double>(&sample, 1));
        patch[static_cast<std::size_t>(dy + radius_) * side + (dx + radius_)] = static_cast<float>(sample);
      }
    }
    const auto r = soft_argmax(patch, side, side, temperature_);
    if (r.confidence <= 0.0) continue;
    out.coords[j] = (anchor - Vec2(radius_, radius_) + r.coord) * downscale_;
    out.confidence[j] = r.confidence;
  }
  return out;
}

DecodedKeypoints2D FixedEvidence::decode(const Keypoints2D&, const std::array<bool, kNumJoints>& usable) const {
  DecodedKeypoints2D out = targets_;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!usable[j]) out.confidence[j] = 0.0;
  }
  return out;
}

Vec3 gauss_newton_step(const Vec3& point, const Vec2& target_left, double conf_left, const Vec2& target_right,
                       double conf_right, const StereoRig& rig) {
  Mat3 normal = Mat3::Zero();
  Vec3 gradient = Vec3::Zero();
  double total = 0.0;
  auto accumulate = [&](const CameraModel& cam, const Vec2& target, double c) {
    c = usable_conf(c);
    if (c == 0.0 || !target.allFinite()) return;
    const auto proj = try_project(point, cam);
    if (!proj) return;
    const auto J = pinhole_jacobian(point, cam);
    const Vec2 r = proj->pixel - target;
    normal += c * J.transpose() * J;
    gradient += c * J.transpose() * r;
    total += c;
  };
  accumulate(rig.left(), target_left, conf_left);
  accumulate(rig.right(), target_right, conf_right);
  if (total == 0.0) return Vec3::Zero();
  normal += kGaussNewtonDamping * Mat3::Identity();
  Eigen::LDLT<Mat3> ldlt(normal);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return Vec3::Zero();
  const Vec3 step = -ldlt.solve(gradient);
  return step.allFinite() ? step : Vec3::Zero();
}

PoseDelta gauss_newton_residual(const RefinementState& state, const DecodedKeypoints2D& left,
                                const DecodedKeypoints2D& right, const StereoRig& rig) {
  PoseDelta delta;
  for (int j = 0; j < kNumJoints; ++j) {
    delta[j] = Vec3::Zero();
    if (!state.pose.valid[j]) continue;
    delta[j] = gauss_newton_step(state.pose.joints[j], left.coords[j], left.confidence[j], right.coords[j],
                                 right.confidence[j], rig);
  }
  return delta;
}

PoseDelta OraclePredictor::predict(const RefinementState& state, const DecodedKeypoints2D& left,
                                   const DecodedKeypoints2D& right, const StereoRig&) const {
  PoseDelta delta;
  for (int j = 0; j < kNumJoints; ++j) {
    delta[j] = Vec3::Zero();
    const bool evidence = usable_conf(left.confidence[j]) + usable_conf(right.confidence[j]) > 0.0;
    if (!evidence || !gt_.valid[j] || !state.pose.valid[j]) continue;
    delta[j] = gt_.joints[j] - state.pose.joints[j];
  }
  return delta;
}

RefinementState refine(const HandPose3D& init, const EvidenceSource& left, const EvidenceSource& right,
                       const StereoRig& rig, const RefinementConfig& cfg, const ResidualPredictor& predictor) {
  cfg.validate();
  RefinementState state;
  state.pose = init;
  if (cfg.n_iters == 0) return state;

  DecodedKeypoints2D accepted_left;
  DecodedKeypoints2D accepted_right;
  std::array<JointError, kNumJoints> recorded{};
  double norm_left = 0.0;
  double norm_right = 0.0;

  for (int k = 0; k < cfg.n_iters; ++k) {
    const Reprojection reproj = reproject_all(state.pose, rig);
    std::array<bool, kNumJoints> usable_left{};
    std::array<bool, kNumJoints> usable_right{};
    for (int j = 0; j < kNumJoints; ++j) {
      usable_left[j] = reproj.in_front[j][0];
      usable_right[j] = reproj.in_front[j][1];
    }
    const DecodedKeypoints2D fresh_left = left.decode(reproj.left, usable_left);
    const DecodedKeypoints2D fresh_right = right.decode(reproj.right, usable_right);

    if (k == 0) {
      accepted_left = fresh_left;
      accepted_right = fresh_right;
      double initial_left = 0.0;
      double initial_right = 0.0;
      double initial_total = 0.0;
      for (int j = 0; j < kNumJoints; ++j) {
        if (!state.pose.valid[j]) continue;
        norm_left += usable_conf(accepted_left.confidence[j]);
        norm_right += usable_conf(accepted_right.confidence[j]);
        recorded[j] = joint_error(state.pose.joints[j], targets_of(accepted_left, accepted_right, j), rig);
        initial_left += recorded[j].left;
        initial_right += recorded[j].right;
        initial_total += recorded[j].total();
      }
      const double norm = norm_left + norm_right;
      state.initial_err_px = norm > 0.0 ? initial_total / norm : 0.0;
      state.initial.iteration = 0;
      state.initial.mean_err_left_px = norm_left > 0.0 ? initial_left / norm_left : 0.0;
      state.initial.mean_err_right_px = norm_right > 0.0 ? initial_right / norm_right : 0.0;
      state.initial.mean_err_px = state.initial_err_px;
    } else {
      // Adopt fresh targets per joint only if they do not raise the error
      // already recorded for that joint; this keeps the trace monotone.
      for (int j = 0; j < kNumJoints; ++j) {
        if (!state.pose.valid[j]) continue;
        const JointError e = joint_error(state.pose.joints[j], targets_of(fresh_left, fresh_right, j), rig);
        if (e.total() <= recorded[j].total()) {
          accepted_left.coords[j] = fresh_left.coords[j];
          accepted_left.confidence[j] = fresh_left.confidence[j];
          accepted_right.coords[j] = fresh_right.coords[j];
          accepted_right.confidence[j] = fresh_right.confidence[j];
          recorded[j] = e;
        }
      }
    }

    const PoseDelta delta = predictor.predict(state, accepted_left, accepted_right, rig);
    const double eta = cfg.eta(k);
    double step_sq = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
      if (!state.pose.valid[j]) continue;
      const Vec3& current = state.pose.joints[j];
      Vec3 step = delta[j].allFinite() ? Vec3(eta * delta[j]) : Vec3::Zero();
      const JointTargets targets = targets_of(accepted_left, accepted_right, j);
      JointError after = joint_error(current + step, targets, rig);
      if (cfg.backtracking) {
        int halvings = 0;
        while (after.total() > recorded[j].total() && halvings < cfg.max_halvings) {
          step *= 0.5;
          after = joint_error(current + step, targets, rig);
          ++halvings;
        }
        if (after.total() > recorded[j].total()) {
          step.setZero();
          after = recorded[j];
        }
      }
      state.pose.joints[j] = current + step;
      recorded[j] = after;
      step_sq += step.squaredNorm();
    }

    TraceRecord rec;
    rec.iteration = k + 1;
    double sum_left = 0.0;
    double sum_right = 0.0;
    double sum_total = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
      if (!state.pose.valid[j]) continue;
      sum_left += recorded[j].left;
      sum_right += recorded[j].right;
      sum_total += recorded[j].total();
    }
    rec.mean_err_left_px = norm_left > 0.0 ? sum_left / norm_left : 0.0;
    rec.mean_err_right_px = norm_right > 0.0 ? sum_right / norm_right : 0.0;
    rec.mean_err_px = norm_left + norm_right > 0.0 ? sum_total / (norm_left + norm_right) : 0.0;
    rec.step_norm_mm = std::sqrt(step_sq);
    state.trace.push_back(rec);
    state.iteration = k + 1;
  }
  return state;
}

namespace {

void check_grid_covers(const HeatmapStack& stack, const CameraModel& cam, double downscale, const char* view) {
  const double w = stack.width * downscale;
  const double h = stack.height * downscale;
  if (std::abs(w - cam.width()) >= downscale || std::abs(h - cam.height()) >= downscale) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(view) + " heatmap grid " + std::to_string(stack.width) + "x" +
                    std::to_string(stack.height) + " at downscale " + std::to_string(downscale) +
                    " does not cover a " + std::to_string(cam.width()) + "x" + std::to_string(cam.height()) +
                    " image");
  }
}

}  // namespace

RefinementState refine(const HandPose3D& init, const HeatmapStack& left, const HeatmapStack& right,
                       const StereoRig& rig, const RefinementConfig& cfg, const ResidualPredictor& predictor) {
  cfg.validate();
  check_grid_covers(left, rig.left(), cfg.downscale, "left");
  check_grid_covers(right, rig.right(), cfg.downscale, "right");
  const HeatmapEvidence el(left, cfg.downscale, cfg.patch_radius, cfg.temperature);
  const HeatmapEvidence er(right, cfg.downscale, cfg.patch_radius, cfg.temperature);
  return refine(init, el, er, rig, cfg, predictor);
}

RefinementState refine(const HandPose3D& init, const HeatmapStack& left, const HeatmapStack& right,
                       const StereoRig& rig, const RefinementConfig& cfg, const HandPose3D* ground_truth) {
  if (cfg.predictor == PredictorKind::Oracle) {
    if (!ground_truth) throw Error(ErrorCode::InvalidArgument, "oracle predictor needs ground truth");
    return refine(init, left, right, rig, cfg, OraclePredictor(*ground_truth));
  }
  return refine(init, left, right, rig, cfg, GaussNewtonPredictor());
}

std::string trace_to_text(const RefinementState& state) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,mean_err_L_px,mean_err_R_px,step_norm_mm\n";
  auto row = [&](const TraceRecord& r) {
    out << r.iteration << ',' << r.mean_err_left_px << ',' << r.mean_err_right_px << ',' << r.step_norm_mm << '\n';
  };
  if (!state.trace.empty()) row(state.initial);
  for (const auto& r : state.trace) row(r);
  return out.str();
}

}  // namespace egohand
