#include <doctest.h>

#include <cmath>
#include <random>

#include "egohand/simulator.hpp"
#include "egohand/stereo_solver.hpp"
#include "oracles.hpp"

using namespace egohand;

namespace {

CameraModel pinhole(const Vec3& T) { return {800, 800, 640, 360, {}, Mat3::Identity(), T, 1280, 720}; }

StereoRig pinhole_rig() { return {pinhole(Vec3::Zero()), pinhole(Vec3(-64, 0, 0))}; }

oracle::Pinhole to_oracle(const CameraModel& c) {
  oracle::Pinhole o;
  o.fx = c.fx();
  o.fy = c.fy();
  o.cx = c.cx();
  o.cy = c.cy();
  o.R = c.rotation();
  o.T = c.translation();
  return o;
}

Vec3 random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(-150, 150), y(-100, 100), z(250, 900);
  return {x(rng), y(rng), z(rng)};
}

HandPose3D sample_pose(std::uint64_t seed, double t = 0.4) {
  SceneConfig sc;
  sc.seed = seed;
  return pose_at(make_motion(sc), t);
}

struct Views {
  DecodedKeypoints2D left, right;
};

Views exact_views(const HandPose3D& pose, const StereoRig& rig) {
  Views v;
  for (int j = 0; j < kNumJoints; ++j) {
    v.left.coords[j] = project(pose.joints[j], rig.left()).pixel;
    v.right.coords[j] = project(pose.joints[j], rig.right()).pixel;
    v.left.confidence[j] = v.right.confidence[j] = 1.0;
  }
  return v;
}

HeatmapStack heatmaps_of(const Keypoints2D& px, double downscale, double sigma, int w, int h) {
  std::array<Vec2, kNumJoints> nodes;
  std::array<bool, kNumJoints> vis;
  for (int j = 0; j < kNumJoints; ++j) {
    nodes[j] = px[j] / downscale;
    vis[j] = true;
  }
  return render_gaussian(nodes, vis, sigma, w, h);
}

double max_joint_distance(const HandPose3D& a, const HandPose3D& b) {
  double m = 0.0;
  for (int j = 0; j < kNumJoints; ++j) {
    if (a.valid[j] && b.valid[j]) m = std::max(m, (a.joints[j] - b.joints[j]).norm());
  }
  return m;
}

}  // namespace

TEST_CASE("exact projections triangulate back to the point") {
  std::mt19937_64 rng(1);
  const auto rig = pinhole_rig();
  const auto drig = default_rig();
  const auto PL = oracle::projection_matrix(to_oracle(rig.left()));
  const auto PR = oracle::projection_matrix(to_oracle(rig.right()));
  for (int i = 0; i < 500; ++i) {
    const Vec3 X = random_point(rng);
    const Vec2 uL = project(X, rig.left()).pixel, uR = project(X, rig.right()).pixel;
    const auto p = triangulate_point(uL, uR, 1.0, 1.0, rig);
    REQUIRE(p.has_value());
    CHECK((*p - X).norm() < 1e-3);
    CHECK((*p - oracle::homogeneous_dlt(PL, PR, uL, uR)).norm() < 1e-6);

    const auto pd = triangulate_point(project(X, drig.left()).pixel, project(X, drig.right()).pixel, 1.0, 1.0, drig);
    REQUIRE(pd.has_value());
    CHECK((*pd - X).norm() < 1e-3);
  }
}

TEST_CASE("weighted triangulation matches unweighted and ray-midpoint references") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 1.5);
  const auto rig = pinhole_rig();
  const auto oL = to_oracle(rig.left()), oR = to_oracle(rig.right());
  const auto PL = oracle::projection_matrix(oL), PR = oracle::projection_matrix(oR);
  for (int i = 0; i < 200; ++i) {
    const Vec3 X = random_point(rng);
    const Vec2 uL = project(X, rig.left()).pixel + Vec2(noise(rng), noise(rng));
    const Vec2 uR = project(X, rig.right()).pixel + Vec2(noise(rng), noise(rng));
    const auto unit = triangulate_point(uL, uR, 1.0, 1.0, rig);
    const auto scaled = triangulate_point(uL, uR, 0.37, 0.37, rig);
    REQUIRE(unit.has_value());
    REQUIRE(scaled.has_value());
    CHECK((*unit - *scaled).norm() < 1e-9);
    // Different estimators minimise different residuals, so with pixel
    // noise they only agree to within the depth uncertainty of the rig.
    CHECK((*unit - oracle::homogeneous_dlt(PL, PR, uL, uR)).norm() < 5.0);
    CHECK((*unit - oracle::ray_midpoint(oL, oR, uL, uR)).norm() < 5.0);
  }
}

TEST_CASE("triangulation degeneracies") {
  const auto rig = pinhole_rig();
  const Vec3 X(10, 20, 500);
  const Vec2 uL = project(X, rig.left()).pixel, uR = project(X, rig.right()).pixel;
  CHECK_FALSE(triangulate_point(uL, uR, 0.0, 1.0, rig).has_value());
  CHECK_FALSE(triangulate_point(uL, uR, 1.0, 0.0, rig).has_value());
  CHECK_FALSE(triangulate_point(uL, uR, 0.0, 0.0, rig).has_value());

  Keypoints2D L{}, R{};
  std::array<double, kNumJoints> cl{}, cr{};
  for (int j = 0; j < kNumJoints; ++j) {
    L[j] = uL;
    R[j] = uR;
    cl[j] = cr[j] = 1.0;
  }
  cl[3] = 0.0;
  const auto pose = triangulate(L, R, cl, cr, rig);
  CHECK(pose.valid_count() == kNumJoints - 1);
  CHECK_FALSE(pose.valid[3]);
}

TEST_CASE("reprojection") {
  const auto rig = default_rig();
  auto pose = sample_pose(3);
  const auto v = exact_views(pose, rig);
  const auto tri = triangulate(v.left, v.right, rig);
  const auto re = reproject_all(tri, rig);
  for (int j = 0; j < kNumJoints; ++j) {
    CHECK((re.left[j] - v.left.coords[j]).norm() < 1e-6);
    CHECK((re.right[j] - v.right.coords[j]).norm() < 1e-6);
  }
  pose.valid[4] = false;
  pose.joints[7] = Vec3(-30, 0, -10);  // behind the left camera, in front of neither
  pose.joints[8] = Vec3(-50, 0, 0.0);  // left z = 0, right z = 0
  const auto re2 = reproject_all(pose, rig);
  CHECK_FALSE(re2.in_front[4][0]);
  CHECK_FALSE(re2.in_front[4][1]);
  CHECK_FALSE(re2.in_front[7][0]);
  CHECK(re2.in_front[0][0]);
  CHECK(re2.in_front[0][1]);

  // A joint behind only the left camera still projects into the right view.
  const Mat3 back(Eigen::AngleAxisd(M_PI, Vec3::UnitY()));
  const StereoRig turned(CameraModel(800, 800, 640, 360, {}, Mat3::Identity(), Vec3::Zero(), 1280, 720),
                         CameraModel(800, 800, 640, 360, {}, back, Vec3(0, 0, 100), 1280, 720));
  HandPose3D one = pose;
  one.valid.fill(false);
  one.valid[0] = true;
  one.joints[0] = Vec3(0, 0, -10);
  const Vec3 cam_r = turned.right().to_camera(one.joints[0]);
  REQUIRE(cam_r.z() > 0.0);
  const auto re3 = reproject_all(one, turned);
  CHECK_FALSE(re3.in_front[0][0]);
  CHECK(re3.in_front[0][1]);
  CHECK(re3.right[0].allFinite());
}

TEST_CASE("gauss-newton step") {
  const auto rig = pinhole_rig();
  const Vec3 opt(20, -15, 450);
  const Vec2 tL = project(opt, rig.left()).pixel, tR = project(opt, rig.right()).pixel;
  SUBCASE("zero at the optimum") { CHECK(gauss_newton_step(opt, tL, 1.0, tR, 1.0, rig).norm() < 1e-6); }
  SUBCASE("zero without confidence") {
    CHECK(gauss_newton_step(opt + Vec3(5, 5, 5), tL, 0.0, tR, 0.0, rig) == Vec3::Zero());
  }
  SUBCASE("one step recovers a baseline-orthogonal offset") {
    const Vec3 start = opt + Vec3(0, 10, 0);
    const Vec3 after = start + gauss_newton_step(start, tL, 1.0, tR, 1.0, rig);
    CHECK((after - opt).norm() < 0.01 * 10.0);
  }
}

TEST_CASE("refinement loop basics") {
  const auto rig = default_rig();
  const auto gt = sample_pose(4);
  const auto v = exact_views(gt, rig);
  const FixedEvidence el(v.left), er(v.right);

  HandPose3D init = gt;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 8.0);
  for (auto& p : init.joints) p += Vec3(n(rng), n(rng), n(rng));

  SUBCASE("zero iterations") {
    RefinementConfig cfg;
    cfg.n_iters = 0;
    const auto st = refine(init, el, er, rig, cfg, GaussNewtonPredictor());
    CHECK(max_joint_distance(st.pose, init) == 0.0);
    CHECK(st.trace.empty());
    CHECK(trace_to_text(st) == "iteration,mean_err_L_px,mean_err_R_px,step_norm_mm\n");
  }
  SUBCASE("oracle with unit step reaches ground truth in one iteration") {
    RefinementConfig cfg;
    cfg.n_iters = 1;
    cfg.predictor = PredictorKind::Oracle;
    const auto st = refine(init, el, er, rig, cfg, OraclePredictor(gt));
    CHECK(max_joint_distance(st.pose, gt) < 1e-9);
    REQUIRE(st.trace.size() == 1);
    CHECK(st.trace[0].mean_err_px < 1e-6);
  }
  SUBCASE("oracle contraction follows the step schedule") {
    RefinementConfig cfg;
    cfg.n_iters = 3;
    cfg.step_ratio = {0.5};
    cfg.backtracking = false;
    const auto st = refine(init, el, er, rig, cfg, OraclePredictor(gt));
    for (int j = 0; j < kNumJoints; ++j) {
      const Vec3 gap0 = init.joints[j] - gt.joints[j];
      const Vec3 gap = st.pose.joints[j] - gt.joints[j];
      CHECK((gap - 0.125 * gap0).norm() < 1e-9);
    }
  }
  SUBCASE("oracle MPJPE is non-increasing for any schedule") {
    for (const auto& sched : std::vector<std::vector<double>>{{0.1}, {1.0, 0.3, 0.7}, {0.9, 0.05}}) {
      double prev = 1e300;
      for (int n_iters = 0; n_iters <= 4; ++n_iters) {
        RefinementConfig cfg;
        cfg.n_iters = n_iters;
        cfg.step_ratio = sched;
        const auto st = refine(init, el, er, rig, cfg, OraclePredictor(gt));
        double sum = 0.0;
        for (int j = 0; j < kNumJoints; ++j) sum += (st.pose.joints[j] - gt.joints[j]).norm();
        CHECK(sum <= prev + 1e-12);
        prev = sum;
      }
    }
  }
  SUBCASE("gauss-newton with fixed targets converges and is monotone") {
    RefinementConfig cfg;
    cfg.n_iters = 5;
    const auto st = refine(init, el, er, rig, cfg, GaussNewtonPredictor());
    double prev = st.initial.mean_err_px;
    for (const auto& r : st.trace) {
      CHECK(r.mean_err_px <= prev);
      prev = r.mean_err_px;
    }
    CHECK(max_joint_distance(st.pose, gt) < 1e-3);
    const auto text = trace_to_text(st);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 1 + 5);
  }
  SUBCASE("fixed point is kept") {
    const auto tri = triangulate(v.left, v.right, rig);
    RefinementConfig cfg;
    const auto st = refine(tri, el, er, rig, cfg, GaussNewtonPredictor());
    CHECK(max_joint_distance(st.pose, tri) < 1e-6);
  }
  SUBCASE("configuration checks") {
    RefinementConfig cfg;
    cfg.step_ratio = {0.0};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.step_ratio = {1.5};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.step_ratio = {0.2, 0.4};
    CHECK(cfg.eta(0) == 0.2);
    CHECK(cfg.eta(5) == 0.4);
    cfg.n_iters = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK(predictor_kind_from_string("oracle") == PredictorKind::Oracle);
    CHECK_THROWS_AS(predictor_kind_from_string("learned"), Error);
  }
}

TEST_CASE("heatmap-driven refinement") {
  const auto rig = default_rig();
  const auto gt = sample_pose(6, 1.3);
  const auto v = exact_views(gt, rig);
  const double ds = 4.0;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 2.0);
  Keypoints2D nl = v.left.coords, nr = v.right.coords;
  for (int j = 0; j < kNumJoints; ++j) {
    nl[j] += Vec2(n(rng), n(rng));
    nr[j] += Vec2(n(rng), n(rng));
  }
  auto hl = heatmaps_of(nl, ds, 2.0, 320, 180);
  auto hr = heatmaps_of(nr, ds, 2.0, 320, 180);
  const auto init = triangulate(decode_argmax(hl, ds), decode_argmax(hr, ds), rig);
  RefinementConfig cfg;
  cfg.downscale = ds;

  const auto st = refine(init, hl, hr, rig, cfg);
  REQUIRE(st.trace.size() == 3);
  double prev = st.initial.mean_err_px;
  for (const auto& r : st.trace) {
    CHECK(r.mean_err_px <= prev);
    prev = r.mean_err_px;
  }

  SUBCASE("the trace stays non-increasing after convergence") {
    std::mt19937_64 seeds(70);
    for (int trial = 0; trial < 20; ++trial) {
      Keypoints2D ml = v.left.coords, mr = v.right.coords;
      for (int j = 0; j < kNumJoints; ++j) {
        ml[j] += Vec2(n(seeds), n(seeds));
        mr[j] += Vec2(n(seeds), n(seeds));
      }
      const auto gl = heatmaps_of(ml, ds, 2.0, 320, 180);
      const auto gr = heatmaps_of(mr, ds, 2.0, 320, 180);
      RefinementConfig long_cfg = cfg;
      long_cfg.n_iters = 30;
      const auto s = refine(triangulate(decode_argmax(gl, ds), decode_argmax(gr, ds), rig), gl, gr, rig, long_cfg);
      double last = s.initial.mean_err_px;
      for (const auto& r : s.trace) {
        CHECK(r.mean_err_px <= last);
        last = r.mean_err_px;
      }
    }
  }
  SUBCASE("a heatmap channel only affects its own joint") {
    const int j = 17;
    auto hl2 = hl;
    const std::array<Vec2, 1> kp{nl[j] / ds + Vec2(1.5, -1.0)};
    const std::array<bool, 1> vis{true};
    const auto moved = render_gaussian(kp, vis, 2.0, 320, 180);
    std::copy(moved.values.begin(), moved.values.end(), hl2.channel(j).begin());
    const auto st2 = refine(init, hl2, hr, rig, cfg);
    for (int k = 0; k < kNumJoints; ++k) {
      if (k == j) {
        CHECK((st2.pose.joints[k] - st.pose.joints[k]).norm() > 1e-6);
      } else {
        CHECK(st2.pose.joints[k] == st.pose.joints[k]);
      }
    }
  }
  SUBCASE("grids that do not cover the image are rejected") {
    cfg.downscale = 2.0;
    CHECK_THROWS_AS(refine(init, hl, hr, rig, cfg), Error);
  }
  SUBCASE("oracle overload needs ground truth") {
    cfg.predictor = PredictorKind::Oracle;
    CHECK_THROWS_AS(refine(init, hl, hr, rig, cfg), Error);
  }
}

TEST_CASE("triangulation and refinement are equivariant under rigid world motion") {
  const auto rig = pinhole_rig();
  const auto gt = sample_pose(8);
  const auto v = exact_views(gt, rig);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  DecodedKeypoints2D L = v.left, R = v.right;
  for (int j = 0; j < kNumJoints; ++j) {
    L.coords[j] += Vec2(n(rng), n(rng));
    R.coords[j] += Vec2(n(rng), n(rng));
  }
  const Mat3 Q = oracle::random_rotation(rng);
  const Vec3 s(40, -25, 300);
  const auto moved_rig = rig.with_world_transform(Q, s);

  const auto a = triangulate(L, R, rig);
  const auto b = triangulate(L, R, moved_rig);
  for (int j = 0; j < kNumJoints; ++j) CHECK((Q * a.joints[j] + s - b.joints[j]).norm() < 1e-6);

  HandPose3D init_b = a;
  for (int j = 0; j < kNumJoints; ++j) init_b.joints[j] = Q * a.joints[j] + s;
  HandPose3D start_a = a;
  for (auto& p : start_a.joints) p += Vec3(3, -2, 5);
  for (int j = 0; j < kNumJoints; ++j) init_b.joints[j] = Q * start_a.joints[j] + s;
  RefinementConfig cfg;
  const auto ra = refine(start_a, FixedEvidence(L), FixedEvidence(R), rig, cfg, GaussNewtonPredictor());
  const auto rb = refine(init_b, FixedEvidence(L), FixedEvidence(R), moved_rig, cfg, GaussNewtonPredictor());
  for (int j = 0; j < kNumJoints; ++j) CHECK((Q * ra.pose.joints[j] + s - rb.pose.joints[j]).norm() < 1e-6);
}
