#include <doctest.h>

#include <cmath>
#include <random>

#include "egohand/heatmap.hpp"
#include "oracles.hpp"

using namespace egohand;

namespace {

std::vector<float> single_channel(const Vec2& kp, double sigma, int w, int h) {
  const std::array<Vec2, 1> kps{kp};
  const std::array<bool, 1> vis{true};
  return render_gaussian(kps, vis, sigma, w, h).values;
}

}  // namespace

TEST_CASE("gaussian rendering") {
  const std::array<Vec2, 2> kps{Vec2(10, 7), Vec2(3, 3)};
  const std::array<bool, 2> vis{true, false};
  const auto hm = render_gaussian(kps, vis, 2.0, 32, 24);
  CHECK(hm.joints == 2);
  CHECK(hm.at(0, 10, 7) == 1.0f);
  CHECK(hm.at(0, 12, 7) == doctest::Approx(std::exp(-0.5)).epsilon(1e-7));
  CHECK(hm.at(0, 10, 9) == doctest::Approx(std::exp(-0.5)).epsilon(1e-7));
  for (float v : hm.channel(1)) CHECK(v == 0.0f);
  CHECK_THROWS_AS(render_gaussian(kps, vis, 0.0, 32, 24), Error);
}

TEST_CASE("soft-argmax special inputs") {
  const int W = 21, H = 13;
  SUBCASE("delta map decodes to its node at any temperature") {
    std::vector<float> v(W * H, 0.0f);
    v[5 * W + 17] = 1.0f;
    for (double t : {0.01, 0.1, 1.0, 10.0}) {
      const auto r = soft_argmax(v, W, H, t);
      CHECK(r.coord.x() == doctest::Approx(17.0).epsilon(1e-12));
      CHECK(r.coord.y() == doctest::Approx(5.0).epsilon(1e-12));
      CHECK(r.confidence == 1.0);
    }
  }
  SUBCASE("uniform map decodes to the center") {
    const std::vector<float> v(W * H, 0.3f);
    const auto r = soft_argmax(v, W, H, 0.1);
    CHECK(r.coord.x() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(r.coord.y() == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(r.confidence == doctest::Approx(0.3));
  }
  SUBCASE("all-zero map decodes to the center with no confidence") {
    const std::vector<float> v(W * H, 0.0f);
    const auto r = soft_argmax(v, W, H, 0.1);
    CHECK(r.coord == Vec2(10.0, 6.0));
    CHECK(r.confidence == 0.0);
  }
  SUBCASE("confidence is clamped") {
    std::vector<float> v(W * H, 0.0f);
    v[0] = 3.0f;
    CHECK(soft_argmax(v, W, H, 0.1).confidence == 1.0);
  }
}

TEST_CASE("soft-argmax equals the full double expectation") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int W = 30 + trial, H = 17 + 2 * trial;
    std::vector<float> v(W * H);
    for (auto& x : v) x = static_cast<float>(u(rng) * u(rng));
    for (double t : {0.05, 0.1, 0.5}) {
      const Vec2 ref = oracle::naive_soft_argmax(v, W, H, t);
      CHECK((soft_argmax(v, W, H, t).coord - ref).norm() < 1e-9);
    }
  }
}

TEST_CASE("rendered gaussian decodes close to its peak") {
  const auto v = single_channel(Vec2(40.5, 20.25), 3.0, 96, 48);
  const auto r = soft_argmax(v, 96, 48, 0.1);
  CHECK((r.coord - Vec2(40.5, 20.25)).norm() < 0.05);

  std::mt19937_64 rng(10);
  for (double sigma : {1.0, 2.0, 3.0, 5.0}) {
    for (double temp : {0.05, 0.1, 0.2}) {
      // The sharpened peak has a spread of about sigma * sqrt(temp) nodes;
      // below ~0.5 node its discrete centroid snaps toward the nearest node.
      if (sigma * std::sqrt(temp) < 0.44) continue;
      for (int i = 0; i < 5; ++i) {
        const int W = 80, H = 60;
        std::uniform_real_distribution<double> ux(3 * sigma, W - 1 - 3 * sigma), uy(3 * sigma, H - 1 - 3 * sigma);
        const Vec2 kp(ux(rng), uy(rng));
        const auto d = soft_argmax(single_channel(kp, sigma, W, H), W, H, temp);
        CHECK((d.coord - kp).norm() < 0.1);
      }
    }
  }
}

TEST_CASE("sub-node peaks alias toward the nearest node") {
  // sigma = 1 at temperature 0.05: the decoded coordinate moves most of the
  // way to the nearest node, so the 0.1 px round trip does not hold here.
  const Vec2 kp(30.3, 20.3);
  const auto d = soft_argmax(single_channel(kp, 1.0, 64, 48), 64, 48, 0.05);
  CHECK((d.coord - kp).norm() > 0.1);
  CHECK((d.coord - Vec2(30, 20)).norm() < (kp - Vec2(30, 20)).norm());
  // The decoder still equals the exact expectation of its weights.
  CHECK((d.coord - oracle::naive_soft_argmax(single_channel(kp, 1.0, 64, 48), 64, 48, 0.05)).norm() < 1e-9);
}

TEST_CASE("soft-argmax properties") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int W = 37, H = 23;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> v(W * H);
    for (auto& x : v) x = static_cast<float>(u(rng));
    const auto r = soft_argmax(v, W, H, 0.2);
    CHECK(r.coord.x() >= 0.0);
    CHECK(r.coord.x() <= W - 1);
    CHECK(r.coord.y() >= 0.0);
    CHECK(r.coord.y() <= H - 1);

    std::vector<float> hflip(W * H), vflip(W * H);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        hflip[y * W + (W - 1 - x)] = v[y * W + x];
        vflip[(H - 1 - y) * W + x] = v[y * W + x];
      }
    }
    const auto rh = soft_argmax(hflip, W, H, 0.2);
    const auto rv = soft_argmax(vflip, W, H, 0.2);
    CHECK(std::abs(rh.coord.x() - (W - 1 - r.coord.x())) < 1e-9);
    CHECK(std::abs(rh.coord.y() - r.coord.y()) < 1e-9);
    CHECK(std::abs(rv.coord.y() - (H - 1 - r.coord.y())) < 1e-9);
    CHECK(std::abs(rv.coord.x() - r.coord.x()) < 1e-9);
  }
}

TEST_CASE("bilinear sampling") {
  const int W = 5, H = 4, C = 2;
  std::vector<float> g(W * H * C);
  for (int i = 0; i < W * H * C; ++i) g[i] = static_cast<float>(i * 0.5 + (i % 3));
  const GridView grid{g, W, H, C};

  SUBCASE("nodes") {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const auto s = bilinear_sample(grid, grid_to_normalized(Vec2(x, y), W, H));
        for (int c = 0; c < C; ++c) CHECK(s[c] == doctest::Approx(g[(y * W + x) * C + c]).epsilon(1e-12));
      }
    }
    const auto corner = bilinear_sample(grid, Vec2(-1, -1));
    CHECK(corner[0] == g[0]);
    const auto far = bilinear_sample(grid, Vec2(1, 1));
    CHECK(far[1] == g[((H - 1) * W + W - 1) * C + 1]);
  }
  SUBCASE("midpoint between horizontal neighbours") {
    const auto s = bilinear_sample(grid, grid_to_normalized(Vec2(1.5, 2), W, H));
    for (int c = 0; c < C; ++c) {
      CHECK(s[c] == doctest::Approx(0.5 * (g[(2 * W + 1) * C + c] + g[(2 * W + 2) * C + c])).epsilon(1e-12));
    }
  }
  SUBCASE("zero padding") {
    for (const Vec2& p : {Vec2(-2, 0), Vec2(0, 1.0001), Vec2(1.5, -1.5)}) {
      const auto s = bilinear_sample(grid, p);
      CHECK(s[0] == 0.0);
      CHECK(s[1] == 0.0);
    }
  }
  SUBCASE("agrees with the four-node formula and is linear") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<float> g2(g.size());
    for (std::size_t i = 0; i < g2.size(); ++i) g2[i] = static_cast<float>(std::sin(0.3 * i));
    std::vector<float> mix(g.size());
    const double a = 0.75, b = -1.25;
    for (std::size_t i = 0; i < g.size(); ++i) mix[i] = static_cast<float>(a * g[i] + b * g2[i]);
    for (int i = 0; i < 200; ++i) {
      const Vec2 p(u(rng), u(rng));
      const auto s = bilinear_sample(grid, p);
      const auto s2 = bilinear_sample(GridView{g2, W, H, C}, p);
      const auto sm = bilinear_sample(GridView{mix, W, H, C}, p);
      for (int c = 0; c < C; ++c) {
        CHECK(s[c] == doctest::Approx(oracle::naive_bilinear(g, W, H, C, c, p.x(), p.y())).epsilon(1e-12));
        CHECK(std::abs(sm[c] - (a * s[c] + b * s2[c])) < 1e-4);  // mix is stored as float
      }
    }
  }
}

TEST_CASE("heatmap dumps") {
  std::vector<Vec2> kps(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) kps[j] = Vec2(j % 7 * 4.0, j / 7 * 3.0);
  std::array<bool, kNumJoints> visible{};
  visible.fill(true);
  visible[5] = false;
  const auto hm = render_gaussian(kps, visible, 2.0, 32, 20);
  const auto bytes = write_heatmaps(hm);
  CHECK(bytes.size() == 10 + hm.values.size() * 4);
  CHECK(parse_heatmaps(bytes) == hm);
  auto broken = bytes;
  broken.resize(broken.size() - 4);
  CHECK_THROWS_AS(parse_heatmaps(broken), Error);

  const auto dec = decode_argmax(hm, 4.0);
  CHECK(dec.coords[8] == kps[8] * 4.0);
  CHECK(dec.confidence[5] == 0.0);
  const auto soft = decode_soft_argmax(hm, 0.1, 4.0);
  CHECK((soft.coords[10] - kps[10] * 4.0).norm() < 0.5);
}
