#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "egohand/calibration_io.hpp"
#include "egohand/camera.hpp"
#include "egohand/simulator.hpp"
#include "oracles.hpp"

using namespace egohand;

namespace {

oracle::Pinhole to_oracle(const CameraModel& c) {
  oracle::Pinhole o;
  o.fx = c.fx();
  o.fy = c.fy();
  o.cx = c.cx();
  o.cy = c.cy();
  o.k1 = c.distortion().k1;
  o.k2 = c.distortion().k2;
  o.p1 = c.distortion().p1;
  o.p2 = c.distortion().p2;
  o.k3 = c.distortion().k3;
  o.R = c.rotation();
  o.T = c.translation();
  return o;
}

CameraModel distorted_camera(const Mat3& R = Mat3::Identity(), const Vec3& T = Vec3::Zero()) {
  return {800, 790, 640, 360, Distortion{-0.05, 0.01, 2e-4, -1e-4, 0.001}, R, T, 1280, 720};
}

Vec3 random_in_frustum(std::mt19937_64& rng, const CameraModel& cam) {
  std::uniform_real_distribution<double> u(0.05, 0.95), z(200.0, 2000.0);
  const double depth = z(rng);
  const Vec2 n((u(rng) * cam.width() - cam.cx()) / cam.fx(), (u(rng) * cam.height() - cam.cy()) / cam.fy());
  const Vec3 pc(n.x() * depth, n.y() * depth, depth);
  return cam.rotation().transpose() * (pc - cam.translation());
}

}  // namespace

TEST_CASE("points on the optical axis land on the principal point") {
  const auto cam = distorted_camera();
  for (double z : {1.0, 300.0, 5000.0}) {
    const auto p = project(Vec3(0, 0, z), cam);
    CHECK(p.pixel.x() == doctest::Approx(640.0).epsilon(1e-15));
    CHECK(p.pixel.y() == doctest::Approx(360.0).epsilon(1e-15));
    CHECK(p.depth == z);
  }
}

TEST_CASE("unit pinhole arithmetic") {
  const CameraModel cam(1, 1, 0, 0, {}, Mat3::Identity(), Vec3::Zero(), 10, 10);
  const auto p = project(Vec3(1, 2, 2), cam);
  CHECK(p.pixel.x() == 0.5);
  CHECK(p.pixel.y() == 1.0);
  CHECK(p.depth == 2.0);
}

TEST_CASE("projection agrees with the expanded formula") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 4; ++trial) {
    const Mat3 R = trial == 0 ? Mat3::Identity() : Mat3(Eigen::AngleAxisd(0.1 * trial, Vec3(0.2, 1, 0.1).normalized()));
    const CameraModel cam = trial % 2 ? distorted_camera(R, Vec3(5, -3, 10))
                                      : CameraModel(700, 700, 320, 240, {}, R, Vec3(1, 2, 3), 640, 480);
    const auto ref = to_oracle(cam);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 X = random_in_frustum(rng, cam);
      const Vec2 a = project(X, cam).pixel;
      const Vec2 b = oracle::project(ref, X);
      CHECK((a - b).norm() < 1e-9);
    }
  }
}

TEST_CASE("projection behind the camera") {
  const auto cam = distorted_camera();
  CHECK_THROWS_AS(project(Vec3(0, 0, -1), cam), Error);
  CHECK_FALSE(try_project(Vec3(0, 0, 0), cam).has_value());
  try {
    project(Vec3(1, 1, -5), cam);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BehindCamera);
  }
}

TEST_CASE("back projection") {
  const CameraModel cam(800, 800, 640, 360, {}, Mat3::Identity(), Vec3::Zero(), 1280, 720);
  const Vec3 p = back_project(Vec2(640, 360), 750.0, cam);
  CHECK(p.x() == 0.0);
  CHECK(p.y() == 0.0);
  CHECK(p.z() == 750.0);

  try {
    back_project(Vec2(1, 1), 0.0, cam);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonPositiveDepth);
  }

  std::mt19937_64 rng(2);
  const auto dcam = distorted_camera(Mat3(Eigen::AngleAxisd(0.3, Vec3::UnitY())), Vec3(10, 20, 30));
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 X = random_in_frustum(rng, dcam);
    const auto pr = project(X, dcam);
    const Vec3 back = back_project(pr.pixel, pr.depth, dcam);
    worst = std::max(worst, (project(back, dcam).pixel - pr.pixel).norm());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("undistortion") {
  SUBCASE("zero coefficients are the identity") {
    const Vec2 n(0.3, -0.2);
    CHECK(distort(n, {}) == n);
    CHECK(undistort(n, {}) == n);
  }
  SUBCASE("recovers forward-distorted points") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    const Distortion d{-0.1, 0, 0, 0, 0};
    for (int i = 0; i < 1000; ++i) {
      const Vec2 n(u(rng), u(rng));
      oracle::Pinhole o;
      o.k1 = -0.1;
      const Vec2 dist = oracle::project(o, Vec3(n.x(), n.y(), 1.0));
      CHECK((undistort(dist, d) - n).norm() < 1e-8);
    }
  }
  SUBCASE("non-finite input fails") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    try {
      undistort(Vec2(nan, 0.1), Distortion{-0.1, 0, 0, 0, 0});
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UndistortDivergence);
    }
  }
}

TEST_CASE("normalized pixel coordinates") {
  CHECK(normalize_pixel(Vec2(0, 0), 1280, 720) == Vec2(-1, -1));
  CHECK(normalize_pixel(Vec2(1280, 720), 1280, 720) == Vec2(1, 1));
  CHECK(normalize_pixel(Vec2(640, 360), 1280, 720) == Vec2(0, 0));
  const Vec2 a(13.5, 700.25), b(1000.0, 2.0);
  for (double alpha : {0.0, 0.25, 0.7, 1.0}) {
    const Vec2 lhs = normalize_pixel(alpha * a + (1 - alpha) * b, 1280, 720);
    const Vec2 rhs = alpha * normalize_pixel(a, 1280, 720) + (1 - alpha) * normalize_pixel(b, 1280, 720);
    CHECK((lhs - rhs).norm() < 1e-12);
  }
}

TEST_CASE("moving the world frame and compensating extrinsics keeps projections") {
  std::mt19937_64 rng(4);
  const auto cam = distorted_camera(Mat3(Eigen::AngleAxisd(0.2, Vec3::UnitX())), Vec3(-64, 3, 1));
  for (int trial = 0; trial < 20; ++trial) {
    const Mat3 Q = oracle::random_rotation(rng);
    const Vec3 s(rng() % 200 - 100.0, rng() % 200 - 100.0, rng() % 200 - 100.0);
    const auto moved = cam.with_world_transform(Q, s);
    const Mat3 RtR = moved.rotation().transpose() * moved.rotation();
    CHECK((RtR - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    for (int i = 0; i < 50; ++i) {
      const Vec3 X = random_in_frustum(rng, cam);
      CHECK((project(Q * X + s, moved).pixel - project(X, cam).pixel).norm() < 1e-9);
    }
  }
}

TEST_CASE("camera construction validates its parameters") {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = -1;  // reflection
  CHECK_THROWS_AS(CameraModel(1, 1, 0, 0, {}, bad, Vec3::Zero(), 10, 10), Error);
  CHECK_THROWS_AS(CameraModel(0, 1, 0, 0, {}, Mat3::Identity(), Vec3::Zero(), 10, 10), Error);
  CHECK_THROWS_AS(CameraModel(1, 1, 0, 0, {}, Mat3::Identity(), Vec3::Zero(), 0, 10), Error);
  Mat3 skew = Mat3::Identity();
  skew(0, 1) = 1e-6;
  CHECK_THROWS_AS(CameraModel(1, 1, 0, 0, {}, skew, Vec3::Zero(), 10, 10), Error);
  const CameraModel c(1, 1, 0, 0, {}, Mat3::Identity(), Vec3::Zero(), 10, 10);
  CHECK_THROWS_AS(StereoRig(c, c), Error);
}

TEST_CASE("calibration documents") {
  Calibration calib{default_rig(), default_depth_camera()};
  const auto text = write_calibration(calib);
  const auto back = parse_calibration(text);
  CHECK(back.rig.left() == calib.rig.left());
  CHECK(back.rig.right() == calib.rig.right());
  REQUIRE(back.depth.has_value());
  CHECK(*back.depth == *calib.depth);
  CHECK(back.rig.baseline() == doctest::Approx(64.0));

  auto doc = nlohmann::json::parse(text);
  doc["left"].erase("fx");
  try {
    parse_calibration(doc.dump());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingField);
  }
}
