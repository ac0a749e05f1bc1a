#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "egohand/losses.hpp"
#include "egohand/metrics.hpp"
#include "oracles.hpp"

using namespace egohand;

namespace {

JointMask all_joints() {
  JointMask m;
  m.fill(true);
  return m;
}

HandPose3D random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  HandPose3D p;
  for (auto& j : p.joints) j = Vec3(u(rng), u(rng), 400 + u(rng));
  p.valid.fill(true);
  return p;
}

std::vector<Vec3> masked(const HandPose3D& p) { return {p.joints.begin(), p.joints.end()}; }

}  // namespace

TEST_CASE("mpjpe and 2d error") {
  std::mt19937_64 rng(1);
  const auto gt = random_pose(rng);
  CHECK(mpjpe(gt, gt, all_joints()) == 0.0);
  auto shifted = gt;
  for (auto& j : shifted.joints) j += Vec3(3, 0, 4);
  CHECK(mpjpe(shifted, gt, all_joints()) == doctest::Approx(5.0).epsilon(1e-12));

  JointMask two{};
  two[0] = two[1] = true;
  auto p = gt;
  p.joints[0] += Vec3(10, 0, 0);
  p.joints[1] += Vec3(0, 20, 0);
  CHECK(mpjpe(p, gt, two) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK_THROWS_AS(mpjpe(p, gt, JointMask{}), Error);

  Keypoints2D a{}, b{};
  CHECK(mean_2d_error(a, b, all_joints()) == 0.0);
  for (auto& k : a) k = Vec2(1, 0);
  CHECK(mean_2d_error(a, b, all_joints()) == doctest::Approx(1.0));
  a[0] = Vec2(2, 0);
  a[1] = Vec2(0, 4);
  CHECK(mean_2d_error(a, b, two) == doctest::Approx(3.0));

  // Permuting joints identically in both poses does not change the metric.
  std::array<int, kNumJoints> perm;
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto pp = p, gp = gt;
  for (int j = 0; j < kNumJoints; ++j) {
    pp.joints[j] = p.joints[perm[j]];
    gp.joints[j] = gt.joints[perm[j]];
  }
  CHECK(mpjpe(pp, gp, all_joints()) == doctest::Approx(mpjpe(p, gt, all_joints())).epsilon(1e-12));
}

TEST_CASE("procrustes recovers similarities and matches the quaternion solution") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> s(0.5, 2.0), t(-300, 300);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pred = random_pose(rng);
    const Mat3 R = oracle::random_rotation(rng);
    const double scale = s(rng);
    const Vec3 tr(t(rng), t(rng), t(rng));
    HandPose3D gt = pred;
    for (auto& j : gt.joints) j = scale * R * j + tr;
    CHECK(pa_mpjpe(pred, gt, all_joints()) < 1e-9);
    const auto tf = procrustes_fit(pred, gt, all_joints());
    CHECK(tf.scale == doctest::Approx(scale).epsilon(1e-12));
    CHECK((tf.R - R).norm() < 1e-9);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const auto pred = random_pose(rng);
    const auto gt = random_pose(rng);
    for (bool with_scale : {true, false}) {
      const auto ref = oracle::horn_quaternion(masked(pred), masked(gt), with_scale);
      const auto tf = procrustes_fit(pred, gt, all_joints(), with_scale ? AlignMode::Similarity : AlignMode::Rigid);
      CHECK((tf.R - ref.R).norm() < 1e-8);
      CHECK(tf.scale == doctest::Approx(ref.s).epsilon(1e-9));
      CHECK((tf.t - ref.t).norm() < 1e-6);
    }
  }
}

TEST_CASE("procrustes identity and optimality") {
  std::mt19937_64 rng(3);
  const auto gt = random_pose(rng);
  const auto tf = procrustes_fit(gt, gt, all_joints());
  CHECK((tf.R - Mat3::Identity()).norm() < 1e-12);
  CHECK(tf.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pa_mpjpe(gt, gt, all_joints()) < 1e-9);

  auto pred = gt;
  std::normal_distribution<double> n(0.0, 10.0);
  for (auto& j : pred.joints) j += Vec3(n(rng), n(rng), n(rng));
  // Alignment minimizes the squared error, so no random similarity around
  // the fit does better in that objective.
  auto sq = [&](const HandPose3D& p) {
    double s = 0.0;
    for (int j = 0; j < kNumJoints; ++j) s += (p.joints[j] - gt.joints[j]).squaredNorm();
    return s;
  };
  const auto aligned = procrustes_align(pred, gt, all_joints());
  const double best = sq(aligned);
  std::normal_distribution<double> small(0.0, 0.02);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat3 dR(Eigen::AngleAxisd(std::abs(small(rng)), Vec3(n(rng), n(rng), n(rng)).normalized()));
    const double ds = 1.0 + small(rng);
    const Vec3 dt(small(rng) * 50, small(rng) * 50, small(rng) * 50);
    HandPose3D other = aligned;
    for (int j = 0; j < kNumJoints; ++j) {
      other.joints[j] = ds * (dR * aligned.joints[j]) + dt;
    }
    CHECK(sq(other) >= best - 1e-9);
  }
}

TEST_CASE("procrustes failure modes") {
  std::mt19937_64 rng(4);
  const auto gt = random_pose(rng);
  JointMask two{};
  two[0] = two[1] = true;
  CHECK_THROWS_AS(procrustes_fit(gt, gt, two), Error);
  HandPose3D line = gt;
  for (int j = 0; j < kNumJoints; ++j) line.joints[j] = Vec3(j, 2 * j, 3 * j);
  try {
    procrustes_fit(line, gt, all_joints());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateConfiguration);
  }
}

TEST_CASE("PA-MPJPE never exceeds MPJPE") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 15.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto gt = random_pose(rng);
    auto pred = gt;
    for (auto& j : pred.joints) j += Vec3(n(rng), n(rng), n(rng));
    CHECK(pa_mpjpe(pred, gt, all_joints()) <= mpjpe(pred, gt, all_joints()) + 1e-12);
    // The fit minimizes squared error, so only the root-mean-square error
    // is guaranteed not to grow; rigid alignment can raise the mean distance.
    const auto rigid = procrustes_align(pred, gt, all_joints(), AlignMode::Rigid);
    double before = 0.0, after = 0.0;
    for (int j = 0; j < kNumJoints; ++j) {
      before += (pred.joints[j] - gt.joints[j]).squaredNorm();
      after += (rigid.joints[j] - gt.joints[j]).squaredNorm();
    }
    CHECK(after <= before + 1e-9);
  }
}

TEST_CASE("PCK curve") {
  CHECK(pck_from_errors(std::vector<double>(10, 0.0)).auc == 1.0);
  CHECK(pck_from_errors(std::vector<double>(10, 60.0)).auc == 0.0);
  const auto c25 = pck_from_errors(std::vector<double>(42, 25.0));
  CHECK(std::abs(c25.auc - 0.5) <= 1.0 / kDefaultPckThresholds);
  CHECK(c25.thresholds.front() == 0.0);
  CHECK(c25.thresholds.back() == 50.0);
  CHECK(c25.pck.size() == 100);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 70.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> e(1 + rng() % 200);
    for (auto& x : e) x = u(rng);
    for (int n : {2, 17, 100}) {
      const auto c = pck_from_errors(e, n);
      CHECK(c.auc == doctest::Approx(oracle::brute_pck_auc(e, n)).epsilon(1e-12));
      CHECK(c.auc >= 0.0);
      CHECK(c.auc <= 1.0);
      for (std::size_t i = 1; i < c.pck.size(); ++i) CHECK(c.pck[i] >= c.pck[i - 1]);
    }
    CHECK(std::abs(pck_from_errors(e, 1000).auc - oracle::analytic_pck_auc(e)) <= 1.0 / 999 + 1e-12);
  }
  for (double e : {0.0, 7.3, 25.0, 49.9}) {
    CHECK(std::abs(pck_from_errors(std::vector<double>{e}).auc - (50.0 - e) / 50.0) <= 1.0 / kDefaultPckThresholds);
  }
  CHECK_THROWS_AS(pck_from_errors(std::vector<double>{}), Error);
  CHECK_THROWS_AS(pck_from_errors(std::vector<double>{1.0}, 1), Error);
}

TEST_CASE("batch evaluation") {
  std::mt19937_64 rng(7);
  std::vector<FrameSample> samples(6);
  std::normal_distribution<double> n(0.0, 5.0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto& s = samples[i];
    s.gt = random_pose(rng);
    s.pred = s.gt;
    for (auto& j : s.pred.joints) j += Vec3(n(rng), n(rng), n(rng));
    s.mask = all_joints();
    s.mask[i] = false;
    s.tags = {i % 2 ? "odd" : "even", "all"};
    for (int v = 0; v < 2; ++v) {
      for (int j = 0; j < kNumJoints; ++j) {
        s.gt_2d[v][j] = Vec2(j, v);
        s.pred_2d[v][j] = Vec2(j + 1, v);
      }
      s.mask_2d[v] = all_joints();
    }
  }
  const auto rep = evaluate(samples);
  double sum = 0.0;
  std::size_t cnt = 0;
  for (const auto& s : samples) {
    for (int j = 0; j < kNumJoints; ++j) {
      if (s.mask[j]) {
        sum += (s.pred.joints[j] - s.gt.joints[j]).norm();
        ++cnt;
      }
    }
  }
  CHECK(rep.overall.frames == 6);
  CHECK(rep.overall.joints == cnt);
  CHECK(rep.overall.m3d_mm == doctest::Approx(sum / cnt).epsilon(1e-12));
  CHECK(rep.overall.m2d_px == doctest::Approx(1.0));
  CHECK(rep.overall.pa_m3d_mm <= rep.overall.m3d_mm);
  REQUIRE(rep.by_tag.size() == 3);
  CHECK(rep.by_tag[0].name == "all");
  CHECK(rep.by_tag[0].m3d_mm == doctest::Approx(rep.overall.m3d_mm).epsilon(1e-12));
  CHECK(rep.by_tag[1].frames == 3);

  EvaluationOptions opt;
  opt.threads = 4;
  const auto rep4 = evaluate(samples, opt);
  CHECK(report_to_text(rep4) == report_to_text(rep));
  CHECK(pck_curves_to_text(rep4) == pck_curves_to_text(rep));
  const auto text = report_to_text(rep);
  CHECK(text.find("PA-M3D_mm") != std::string::npos);
  CHECK(text.find("overall") != std::string::npos);
  const auto curves = pck_curves_to_text(rep);
  CHECK(curves.substr(0, curves.find('\n')) == "threshold_mm\toverall\tall\teven\todd");
}

TEST_CASE("smooth L1") {
  const double beta = 2.0;
  auto f = [&](double d) { return smooth_l1(std::vector<double>{d}, std::vector<double>{0.0}, beta); };
  CHECK(f(0.0) == 0.0);
  CHECK(f(beta) == doctest::Approx(0.5 * beta));
  CHECK(f(3 * beta) == doctest::Approx(2.5 * beta));
  const double h = 1e-6;
  CHECK(std::abs(f(beta - h) - f(beta + h)) < 3e-6);
  const double left = (f(beta) - f(beta - h)) / h;
  const double right = (f(beta + h) - f(beta)) / h;
  CHECK(left == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(right == doctest::Approx(1.0).epsilon(1e-5));
  CHECK_THROWS_AS(smooth_l1(std::vector<double>{1}, std::vector<double>{1}, 0.0), Error);
  CHECK_THROWS_AS(smooth_l1(std::vector<double>{1, 2}, std::vector<double>{1}), Error);

  std::mt19937_64 rng(8);
  const auto gt = random_pose(rng);
  auto pred = gt;
  pred.joints[0] += Vec3(3, 0, 0);
  JointMask one{};
  one[0] = true;
  CHECK(smooth_l1(pred, gt, one) == doctest::Approx((3.0 - 0.5) / 3.0));
}

TEST_CASE("heatmap, segmentation and classification losses") {
  HeatmapStack a(2, 4, 3), b(2, 4, 3);
  CHECK(heatmap_mse(a, a) == 0.0);
  std::fill(b.values.begin(), b.values.end(), 1.0f);
  CHECK(heatmap_mse(a, b) == 1.0);
  CHECK_THROWS_AS(heatmap_mse(a, HeatmapStack(2, 4, 4)), Error);

  const std::vector<float> target{0, 1, 1, 0};
  const std::vector<float> perfect{0, 1, 1, 0};
  CHECK(bce_seg(perfect, target) <= 1e-6);
  const std::vector<float> half(4, 0.5f);
  CHECK(bce_seg(half, target) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_seg(half, std::vector<float>(4, 1.0f)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<double> onehot(kNumGestureClasses, 0.0);
  onehot[4] = 1.0;
  CHECK(cross_entropy(onehot, 4) <= 1e-6);
  CHECK(cross_entropy(onehot, 5) == doctest::Approx(-std::log(1e-7)).epsilon(1e-12));
  CHECK(cross_entropy(onehot, 5) == doctest::Approx(16.118).epsilon(1e-4));
  const std::vector<double> uniform(kNumGestureClasses, 1.0 / kNumGestureClasses);
  CHECK(cross_entropy(uniform, 11) == doctest::Approx(std::log(38.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(uniform, 38), Error);
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{0.5, 0.6}, 0), Error);
}

TEST_CASE("loss combinations") {
  LossWeights w;
  CHECK(loss_2d(0, 0, w) == 0.0);
  CHECK(loss_2d(1, 1, w) == doctest::Approx(1.05).epsilon(1e-15));
  LossWeights noseg = w;
  noseg.lambda_seg = 0.0;
  CHECK(loss_2d(3.0, 7.0, noseg) == doctest::Approx(0.05 * 3.0).epsilon(1e-15));

  LossWeights one = w;
  one.w2d = {1.0};
  one.w3d = {1.0};
  CHECK(loss_bev(0, std::vector<double>{0}, std::vector<double>{0}, one) == 0.0);
  CHECK(loss_bev(1, std::vector<double>{1}, std::vector<double>{1}, one) == doctest::Approx(2.5).epsilon(1e-15));
  LossWeights dbl = one;
  dbl.w2d = {2.0};
  dbl.w3d = {2.0};
  const double base = loss_bev(0.7, std::vector<double>{0.3}, std::vector<double>{0.4}, one);
  const double doubled = loss_bev(0.7, std::vector<double>{0.3}, std::vector<double>{0.4}, dbl);
  CHECK(doubled - base == doctest::Approx(0.3 + 0.4).epsilon(1e-12));

  const auto w3 = LossWeights::with_default_schedule(3);
  w3.validate();
  const std::vector<double> ones(3, 1.0), zeros(3, 0.0);
  CHECK(loss_total(0, 0, 0, zeros, zeros, w3) == 0.0);
  CHECK(loss_total(1, 1, 1, ones, ones, w3) == doctest::Approx(15.05).epsilon(1e-14));

  // Linearity in each sub-loss.
  const double t0 = loss_total(0.2, 0.3, 0.4, std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{0.5, 0.6, 0.7}, w3);
  CHECK(loss_total(1.2, 0.3, 0.4, std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{0.5, 0.6, 0.7}, w3) - t0 ==
        doctest::Approx(0.05).epsilon(1e-12));
  CHECK(loss_total(0.2, 0.3, 1.4, std::vector<double>{0.1, 0.2, 0.3}, std::vector<double>{0.5, 0.6, 0.7}, w3) - t0 ==
        doctest::Approx(10.0).epsilon(1e-12));
  CHECK(loss_total(0.2, 0.3, 0.4, std::vector<double>{0.1, 0.2, 1.3}, std::vector<double>{0.5, 0.6, 0.7}, w3) - t0 ==
        doctest::Approx(1.0).epsilon(1e-12));

  LossWeights bad = w3;
  bad.w2d = {1.0, 0.5, 0.7};
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(loss_total(1, 1, 1, ones, std::vector<double>{1.0}, w3), Error);
}
