#include "egohand/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace egohand {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_nonempty(const JointMask& mask) {
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw Error(ErrorCode::EmptyMask, "no joints selected by the mask");
  }
}

}  // namespace

double mpjpe(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask) {
  require_nonempty(mask);
  double sum = 0.0;
  int n = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!mask[j]) continue;
    sum += (pred.joints[j] - gt.joints[j]).norm();
    ++n;
  }
  return sum / n;
}

double mean_2d_error(const Keypoints2D& pred, const Keypoints2D& gt, const JointMask& mask) {
  require_nonempty(mask);
  double sum = 0.0;
  int n = 0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!mask[j]) continue;
    sum += (pred[j] - gt[j]).norm();
    ++n;
  }
  return sum / n;
}

SimilarityTransform procrustes_fit(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask,
                                   AlignMode mode) {
  int n = 0;
  Vec3 mu_p = Vec3::Zero();
  Vec3 mu_g = Vec3::Zero();
  for (int j = 0; j < kNumJoints; ++j) {
    if (!mask[j]) continue;
    mu_p += pred.joints[j];
    mu_g += gt.joints[j];
    ++n;
  }
  if (n < 3) throw Error(ErrorCode::EmptyMask, "alignment needs at least three joints");
  mu_p /= n;
  mu_g /= n;

  Mat3 cov = Mat3::Zero();
  double var_p = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!mask[j]) continue;
    const Vec3 a = pred.joints[j] - mu_p;
    const Vec3 b = gt.joints[j] - mu_g;
    cov += b * a.transpose();
    var_p += a.squaredNorm();
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "cross-covariance has rank < 2");
  }
  Vec3 d = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2) = -1.0;

  SimilarityTransform tf;
  tf.R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  tf.scale = mode == AlignMode::Similarity ? sv.dot(d) / var_p : 1.0;
  tf.t = mu_g - tf.scale * (tf.R * mu_p);
  return tf;
}

HandPose3D procrustes_align(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask, AlignMode mode) {
  const auto tf = procrustes_fit(pred, gt, mask, mode);
  HandPose3D out = pred;
  for (int j = 0; j < kNumJoints; ++j) {
    if (pred.valid[j]) out.joints[j] = tf.apply(pred.joints[j]);
  }
  return out;
}

double pa_mpjpe(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask, AlignMode mode) {
  return mpjpe(procrustes_align(pred, gt, mask, mode), gt, mask);
}

PckCurve pck_from_errors(std::span<const double> errors, int n_thresholds) {
  if (errors.empty()) throw Error(ErrorCode::EmptyMask, "no joint errors to score");
  if (n_thresholds < 2) throw Error(ErrorCode::InvalidArgument, "need at least two PCK thresholds");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());

  PckCurve c;
  c.thresholds.resize(n_thresholds);
  c.pck.resize(n_thresholds);
  const double step = kPckMaxThresholdMm / (n_thresholds - 1);
  for (int i = 0; i < n_thresholds; ++i) {
    const double tau = i == n_thresholds - 1 ? kPckMaxThresholdMm : i * step;
    const auto hits = std::upper_bound(sorted.begin(), sorted.end(), tau) - sorted.begin();
    c.thresholds[i] = tau;
    c.pck[i] = static_cast<double>(hits) / sorted.size();
  }
  double area = 0.0;
  for (int i = 1; i < n_thresholds; ++i) {
    area += 0.5 * (c.pck[i] + c.pck[i - 1]) * (c.thresholds[i] - c.thresholds[i - 1]);
  }
  c.auc = area / kPckMaxThresholdMm;
  return c;
}

PckCurve pck_auc(const HandPose3D& pred, const HandPose3D& gt, const JointMask& mask, int n_thresholds) {
  std::vector<double> errors;
  for (int j = 0; j < kNumJoints; ++j) {
    if (mask[j]) errors.push_back((pred.joints[j] - gt.joints[j]).norm());
  }
  return pck_from_errors(errors, n_thresholds);
}

JointMask joint_mask(const HandPose3D& pred, const HandPose3D& gt) {
  JointMask m{};
  for (int j = 0; j < kNumJoints; ++j) m[j] = pred.valid[j] && gt.valid[j];
  return m;
}

namespace {

struct FrameErrors {
  std::vector<double> e3d;
  std::vector<double> e2d;
  std::vector<double> pa;
};

FrameErrors frame_errors(const FrameSample& s, AlignMode align) {
  FrameErrors fe;
  for (int j = 0; j < kNumJoints; ++j) {
    if (s.mask[j]) fe.e3d.push_back((s.pred.joints[j] - s.gt.joints[j]).norm());
  }
  for (int v = 0; v < 2; ++v) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (s.mask_2d[v][j]) fe.e2d.push_back((s.pred_2d[v][j] - s.gt_2d[v][j]).norm());
    }
  }
  if (fe.e3d.size() >= 3) {
    try {
      const auto aligned = procrustes_align(s.pred, s.gt, s.mask, align);
      for (int j = 0; j < kNumJoints; ++j) {
        if (s.mask[j]) fe.pa.push_back((aligned.joints[j] - s.gt.joints[j]).norm());
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConfiguration) throw;
    }
  }
  return fe;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

struct Pool {
  std::size_t frames = 0;
  std::vector<double> e3d, e2d, pa;

  void add(const FrameErrors& fe) {
    ++frames;
    e3d.insert(e3d.end(), fe.e3d.begin(), fe.e3d.end());
    e2d.insert(e2d.end(), fe.e2d.begin(), fe.e2d.end());
    pa.insert(pa.end(), fe.pa.begin(), fe.pa.end());
  }

  MetricRow finish(std::string name, int n_thresholds) const {
    MetricRow r;
    r.name = std::move(name);
    r.frames = frames;
    r.joints = e3d.size();
    r.m2d_px = mean_of(e2d);
    r.m3d_mm = mean_of(e3d);
    r.pa_m3d_mm = mean_of(pa);
    if (!e3d.empty()) {
      r.curve = pck_from_errors(e3d, n_thresholds);
      r.pck_auc = r.curve.auc;
    } else {
      r.pck_auc = kNaN;
    }
    return r;
  }
};

}  // namespace

EvaluationReport evaluate(std::span<const FrameSample> samples, const EvaluationOptions& options) {
  std::vector<FrameErrors> per_frame(samples.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, samples.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < samples.size(); ++i) per_frame[i] = frame_errors(samples[i], options.align);
  } else {
    std::vector<std::exception_ptr> failures(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < samples.size(); i += threads) {
              per_frame[i] = frame_errors(samples[i], options.align);
            }
          } catch (...) {
            failures[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }

  Pool overall;
  std::map<std::string, Pool> tagged;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    overall.add(per_frame[i]);
    for (const auto& tag : samples[i].tags) tagged[tag].add(per_frame[i]);
  }
  if (overall.e3d.empty()) throw Error(ErrorCode::EmptyMask, "no valid joints in any frame");

  EvaluationReport report;
  report.overall = overall.finish("overall", options.n_thresholds);
  for (const auto& [tag, pool] : tagged) {
    if (!pool.e3d.empty()) report.by_tag.push_back(pool.finish(tag, options.n_thresholds));
  }
  return report;
}

std::string report_to_text(const EvaluationReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %12s %12s %12s %10s\n", "scenario", "frames", "joints", "M-2D_px",
                "M-3D_mm", "PA-M3D_mm", "PCK-AUC");
  os << line;
  auto row = [&](const MetricRow& r) {
    std::snprintf(line, sizeof line, "%-16s %8zu %8zu %12.6f %12.6f %12.6f %10.6f\n", r.name.c_str(), r.frames,
                  r.joints, r.m2d_px, r.m3d_mm, r.pa_m3d_mm, r.pck_auc);
    os << line;
  };
  row(report.overall);
  for (const auto& r : report.by_tag) row(r);
  return os.str();
}

std::string pck_curves_to_text(const EvaluationReport& report) {
  std::vector<const MetricRow*> rows{&report.overall};
  for (const auto& r : report.by_tag) rows.push_back(&r);
  std::ostringstream os;
  os << "threshold_mm";
  for (const auto* r : rows) os << '\t' << r->name;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < report.overall.curve.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", report.overall.curve.thresholds[i]);
    os << buf;
    for (const auto* r : rows) {
      std::snprintf(buf, sizeof buf, "\t%.6f", r->curve.pck[i]);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace egohand
