#include "egohand/camera.hpp"

#include <cmath>

#include <Eigen/LU>

namespace egohand {

CameraModel::CameraModel(double fx, double fy, double cx, double cy, const Distortion& dist, const Mat3& R,
                         const Vec3& T, int width, int height)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), dist_(dist), R_(R), T_(T), width_(width), height_(height) {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidCamera, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidCamera, "image size must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !R.allFinite() || !T.allFinite()) {
    throw Error(ErrorCode::InvalidCamera, "non-finite camera parameter");
  }
  for (double c : {dist.k1, dist.k2, dist.p1, dist.p2, dist.k3}) {
    if (!std::isfinite(c)) throw Error(ErrorCode::InvalidCamera, "non-finite distortion coefficient");
  }
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho >= 1e-9 || std::abs(R.determinant() - 1.0) >= 1e-9) {
    throw Error(ErrorCode::InvalidCamera, "R is not a proper rotation");
  }
}

CameraModel CameraModel::with_world_transform(const Mat3& Q, const Vec3& s) const {
  // R' X' + T' = R X + T with X = Q^T (X' - s)
  const Mat3 R = R_ * Q.transpose();
  return {fx_, fy_, cx_, cy_, dist_, R, T_ - R * s, width_, height_};
}

StereoRig::StereoRig(CameraModel left, CameraModel right) : left_(std::move(left)), right_(std::move(right)) {
  if ((left_.center() - right_.center()).norm() <= 0.0) {
    throw Error(ErrorCode::InvalidCamera, "stereo optical centers coincide");
  }
}

Vec2 distort(const Vec2& n, const Distortion& d) {
  const double x = n.x();
  const double y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  const double dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
  return {x * radial + dx, y * radial + dy};
}

Vec2 undistort(const Vec2& distorted, const Distortion& d) {
  if (!distorted.allFinite()) throw Error(ErrorCode::UndistortDivergence, "non-finite input");
  if (d.is_zero()) return distorted;
  Vec2 p = distorted;
  for (int iter = 0; iter < 20; ++iter) {
    const double x = p.x();
    const double y = p.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
    if (!(radial > 0.0)) break;
    const double dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
    const double dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
    const Vec2 next((distorted.x() - dx) / radial, (distorted.y() - dy) / radial);
    if (!next.allFinite()) break;
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (change < 1e-10) return p;
  }
  throw Error(ErrorCode::UndistortDivergence, "fixed-point undistortion did not converge in 20 iterations");
}

std::optional<Projection> try_project(const Vec3& world, const CameraModel& cam) {
  const Vec3 pc = cam.to_camera(world);
  if (!(pc.z() > kMinDepth)) return std::nullopt;
  const Vec2 n = distort(Vec2(pc.x() / pc.z(), pc.y() / pc.z()), cam.distortion());
  return Projection{Vec2(cam.fx() * n.x() + cam.cx(), cam.fy() * n.y() + cam.cy()), pc.z()};
}

Projection project(const Vec3& world, const CameraModel& cam) {
  auto p = try_project(world, cam);
  if (!p) throw Error(ErrorCode::BehindCamera, "point at or behind the image plane");
  return *p;
}

Vec2 pixel_to_normalized(const Vec2& pixel, const CameraModel& cam) {
  const Vec2 distorted((pixel.x() - cam.cx()) / cam.fx(), (pixel.y() - cam.cy()) / cam.fy());
  return undistort(distorted, cam.distortion());
}

Vec3 back_project(const Vec2& pixel, double depth, const CameraModel& cam) {
  if (!(depth > 0.0)) throw Error(ErrorCode::NonPositiveDepth, "depth must be positive");
  const Vec2 n = pixel_to_normalized(pixel, cam);
  const Vec3 pc(n.x() * depth, n.y() * depth, depth);
  return cam.rotation().transpose() * (pc - cam.translation());
}

}  // namespace egohand
