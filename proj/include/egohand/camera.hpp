#pragma once

#include <optional>

#include "egohand/common.hpp"

namespace egohand {

/// Brown-Conrady coefficients in OpenCV order (k1, k2, p1, p2, k3).
struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double k3 = 0.0;

  bool is_zero() const { return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0 && k3 == 0.0; }
  friend bool operator==(const Distortion&, const Distortion&) = default;
};

/// Pinhole camera with lens distortion. R, T map world (mm) to camera frame:
/// X_cam = R * X_world + T. Pixel centers sit at integer coordinates.
class CameraModel {
 public:
  /// Throws InvalidCamera unless fx, fy > 0, width, height > 0 and R is a
  /// proper rotation (|R^T R - I| < 1e-9, det(R) = +1 within 1e-9).
  CameraModel(double fx, double fy, double cx, double cy, const Distortion& dist, const Mat3& R,
              const Vec3& T, int width, int height);

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  const Distortion& distortion() const { return dist_; }
  const Mat3& rotation() const { return R_; }
  const Vec3& translation() const { return T_; }
  int width() const { return width_; }
  int height() const { return height_; }

  /// Optical center in world coordinates.
  Vec3 center() const { return -R_.transpose() * T_; }
  Vec3 to_camera(const Vec3& world) const { return R_ * world + T_; }

  /// Same physical camera after the world frame is moved by X' = Q X + s.
  CameraModel with_world_transform(const Mat3& Q, const Vec3& s) const;

  bool contains(const Vec2& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() <= width_ - 1.0 && pixel.y() <= height_ - 1.0;
  }

  friend bool operator==(const CameraModel&, const CameraModel&) = default;

 private:
  double fx_, fy_, cx_, cy_;
  Distortion dist_;
  Mat3 R_;
  Vec3 T_;
  int width_, height_;
};

enum class View { Left = 0, Right = 1 };

class StereoRig {
 public:
  /// Throws InvalidCamera if the optical centers coincide.
  StereoRig(CameraModel left, CameraModel right);

  const CameraModel& left() const { return left_; }
  const CameraModel& right() const { return right_; }
  const CameraModel& view(View v) const { return v == View::Left ? left_ : right_; }
  double baseline() const { return (left_.center() - right_.center()).norm(); }

  StereoRig with_world_transform(const Mat3& Q, const Vec3& s) const {
    return {left_.with_world_transform(Q, s), right_.with_world_transform(Q, s)};
  }

 private:
  CameraModel left_;
  CameraModel right_;
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;  // camera-frame z, mm
};

inline constexpr double kMinDepth = 1e-6;

/// World point -> distorted pixel. Throws BehindCamera when z <= 1e-6 mm.
Projection project(const Vec3& world, const CameraModel& cam);
/// Non-throwing variant: nullopt when the point is behind the camera.
std::optional<Projection> try_project(const Vec3& world, const CameraModel& cam);

/// Forward distortion on normalized image coordinates.
Vec2 distort(const Vec2& normalized, const Distortion& dist);

/// Inverts distort() by fixed-point iteration (tolerance 1e-10, at most 20
/// iterations). Throws UndistortDivergence on non-finite input or when the
/// iteration fails to settle.
Vec2 undistort(const Vec2& distorted, const Distortion& dist);

/// Pixel + camera-frame depth -> world point. Throws NonPositiveDepth.
Vec3 back_project(const Vec2& pixel, double depth, const CameraModel& cam);

/// Pixel -> normalized image coordinates (undistorted).
Vec2 pixel_to_normalized(const Vec2& pixel, const CameraModel& cam);

/// 2 * (u_x / W, u_y / H) - (1, 1).
inline Vec2 normalize_pixel(const Vec2& u, int width, int height) {
  return {2.0 * (u.x() / width) - 1.0, 2.0 * (u.y() / height) - 1.0};
}

}  // namespace egohand
