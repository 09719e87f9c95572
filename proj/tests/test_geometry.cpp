#include "oracles.hpp"

#include "touchmap/camera.hpp"
#include "touchmap/error.hpp"
#include "touchmap/hungarian.hpp"
#include "touchmap/sim3.hpp"
#include "touchmap/triangulation.hpp"

#include "doctest.h"

#include <Eigen/Geometry>

#include <random>

using namespace touchmap;

namespace {

CameraCalibration identity_camera(double f = 600) {
  CameraCalibration c;
  c.camera_id = "cam0";
  c.fx = c.fy = f;
  c.cx = 320;
  c.cy = 240;
  c.image_width = 640;
  c.image_height = 480;
  return c;
}

std::vector<CameraCalibration> ring_cameras(int n, double radius = 3.0, double height = 2.5) {
  std::vector<CameraCalibration> out;
  for (int i = 0; i < n; ++i) {
    const double a = 2 * M_PI * i / n + 0.3;
    out.push_back(make_look_at_camera("cam" + std::to_string(i), Vec3(radius * std::cos(a), radius * std::sin(a), height),
                                      Vec3(0, 0, 1), 600, 600, 320, 240, 640, 480));
  }
  return out;
}

oracle::View to_view(const CameraCalibration& c, const Vec2& px, double w) {
  return {c.K(), c.R(), c.t(), px, w};
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("projection of points on the optical axis and off it") {
    const auto cam = identity_camera();
    const Vec2 a = project(Vec3(0, 0, 2), cam);
    CHECK(a.x() == doctest::Approx(320));
    CHECK(a.y() == doctest::Approx(240));
    CHECK(project(Vec3(0.1, 0, 1), cam).x() == doctest::Approx(380));
    CHECK_THROWS_AS(project(Vec3(0, 0, -1), cam), Error);
  }

  TEST_CASE("backprojection round trip") {
    const auto cams = ring_cameras(3);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(0, 640), V(0, 480), D(0.2, 8);
    for (int i = 0; i < 2000; ++i) {
      const auto& c = cams[i % 3];
      const double u = U(rng), v = V(rng), d = D(rng);
      const Vec2 back = project(backproject(u, v, d, c), c);
      CHECK(std::abs(back.x() - u) < 1e-9);
      CHECK(std::abs(back.y() - v) < 1e-9);
    }
    const auto id = identity_camera();
    CHECK((backproject(320, 240, 2, id) - Vec3(0, 0, 2)).norm() < 1e-12);
    CHECK_THROWS_AS(backproject(10, 10, 0, id), Error);
  }

  TEST_CASE("fundamental matrix satisfies the epipolar constraint") {
    const auto cams = ring_cameras(4);
    const Mat3 F = fundamental_matrix(cams[0], cams[1]);
    CHECK(F.norm() == doctest::Approx(1.0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int i = 0; i < 200; ++i) {
      const Vec3 P(U(rng), U(rng), 1 + U(rng));
      const Vec2 xi = project(P, cams[0]), xj = project(P, cams[1]);
      CHECK(std::abs(xj.homogeneous().dot(F * xi.homogeneous())) < 1e-9);
      CHECK(epipolar_distance(xi, xj, F) < 1e-6);
      CHECK(epipolar_distance(xi, xj, F) == doctest::Approx(epipolar_distance(xj, xi, F.transpose())).epsilon(1e-12));
    }
    CHECK_THROWS_AS(fundamental_matrix(cams[0], cams[0]), Error);
  }

  TEST_CASE("epipolar distance of a perpendicular displacement") {
    // Moving x_j by 5 px along the normal of its epipolar line makes the one-sided
    // distance exactly 5 px; the symmetric value averages it with the reverse term.
    const auto cams = ring_cameras(4);
    const Mat3 F = fundamental_matrix(cams[0], cams[2]);
    const Vec3 P(0.2, -0.3, 1.2);
    const Vec2 xi = project(P, cams[0]);
    const Vec2 xj = project(P, cams[2]);
    const Vec3 line = F * xi.homogeneous();
    const Vec2 normal = line.head<2>().normalized();
    const Vec2 moved = xj + 5.0 * normal;
    CHECK(point_line_distance(moved, line) == doctest::Approx(5.0).epsilon(1e-9));
    const Vec3 back = F.transpose() * moved.homogeneous();
    const double reverse = std::abs(back.dot(xi.homogeneous())) / back.head<2>().norm();
    CHECK(epipolar_distance(xi, moved, F) == doctest::Approx(0.5 * (5.0 + reverse)).epsilon(1e-9));
  }

  TEST_CASE("triangulation: exact data, noise against grid refinement, weight scaling") {
    const auto cams = ring_cameras(4, 3.0, 2.5);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0, 1);
    std::uniform_real_distribution<double> U(-0.8, 0.8);
    for (int trial = 0; trial < 30; ++trial) {
      const Vec3 P(U(rng), U(rng), 1 + U(rng));
      std::vector<WeightedObservation> obs;
      for (const auto& c : cams) obs.push_back({&c, project(P, c), 0.5 + 0.1 * (trial % 5)});
      const auto exact = triangulate_weighted(std::span(obs).first(2));
      CHECK((exact.point - P).norm() < 1e-6);
      CHECK(exact.mean_reprojection_error < 1e-6);

      std::vector<oracle::View> views;
      for (auto& o : obs) {
        o.pixel += Vec2(noise(rng), noise(rng));
        views.push_back(to_view(*o.camera, o.pixel, o.weight));
      }
      const auto res = triangulate_weighted(obs);
      const Vec3 ref = oracle::grid_refine(views, P);
      CHECK(oracle::reprojection_cost(views, res.point) <= oracle::reprojection_cost(views, ref) + 1e-6);

      auto scaled = obs;
      for (auto& o : scaled) o.weight *= 10;
      CHECK((triangulate_weighted(scaled).point - res.point).norm() < 1e-9);
    }
  }

  TEST_CASE("triangulation errors") {
    const auto cams = ring_cameras(2);
    const Vec3 P(0, 0, 1);
    std::vector<WeightedObservation> one{{&cams[0], project(P, cams[0]), 1.0}};
    CHECK_THROWS_AS(triangulate_weighted(one), Error);
    std::vector<WeightedObservation> zero{{&cams[0], project(P, cams[0]), 1.0}, {&cams[1], project(P, cams[1]), 0.0}};
    CHECK_THROWS_AS(triangulate_weighted(zero), Error);
    // Two cameras at nearly the same spot see parallel rays.
    auto close = cams[0];
    close.T_cw.topRightCorner<3, 1>() += Vec3(1e-9, 0, 0);
    std::vector<WeightedObservation> par{{&cams[0], project(P, cams[0]), 1.0}, {&close, project(P, close), 1.0}};
    CHECK_THROWS_AS(triangulate_weighted(par), Error);
  }

  TEST_CASE("sim3 closed form agrees with Eigen umeyama") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 50; ++trial) {
      const int m = 10 + trial;
      std::vector<Vec3> src, dst;
      const Mat3 R = random_rotation(rng);
      const double s = 0.5 + std::abs(n(rng));
      const Vec3 t(n(rng), n(rng), n(rng));
      Eigen::Matrix3Xd A(3, m), B(3, m);
      for (int i = 0; i < m; ++i) {
        src.emplace_back(n(rng), n(rng), n(rng));
        dst.push_back(s * R * src.back() + t + 0.01 * Vec3(n(rng), n(rng), n(rng)));
        A.col(i) = src.back();
        B.col(i) = dst.back();
      }
      const Eigen::Matrix4d ref = Eigen::umeyama(A, B, true);
      const Sim3 fit = fit_sim3_closed_form(src, dst);
      const double ref_scale = ref.topLeftCorner<3, 3>().col(0).norm();
      CHECK(fit.scale == doctest::Approx(ref_scale).epsilon(1e-9));
      CHECK((fit.rotation - ref.topLeftCorner<3, 3>() / ref_scale).norm() < 1e-9);
      CHECK((fit.translation - ref.topRightCorner<3, 1>()).norm() < 1e-9);
    }
  }

  TEST_CASE("sim3 ransac on identity and translation") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    std::vector<Vec3> src;
    for (int i = 0; i < 100; ++i) src.emplace_back(n(rng), n(rng), n(rng));
    const auto same = fit_sim3_ransac(src, src);
    CHECK(same.transform.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rotation_angle_between(same.transform.rotation, Mat3::Identity()) < 1e-9);
    CHECK(same.rms_inliers < 1e-12);
    std::vector<Vec3> moved;
    for (const auto& p : src) moved.push_back(p + Vec3(0.3, -0.1, 2.0));
    const auto tr = fit_sim3_ransac(src, moved);
    CHECK(std::abs(tr.transform.scale - 1) < 1e-9);
    CHECK((tr.transform.translation - Vec3(0.3, -0.1, 2.0)).norm() < 1e-9);
    CHECK_THROWS_AS(fit_sim3_ransac(std::span(src).first(2), std::span(moved).first(2)), Error);
  }

  TEST_CASE("sim3 ransac recovers a transform with 30% outliers") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    int good = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const Mat3 R = random_rotation(rng);
      const double s = 0.8 + 0.4 * U(rng) + 0.2;
      const Vec3 t(U(rng), U(rng), 1.5 + U(rng));
      std::vector<Vec3> src, dst;
      for (int i = 0; i < 200; ++i) {
        src.emplace_back(0.1 * n(rng), 0.1 * n(rng), 0.1 * n(rng));
        dst.push_back(i % 10 < 3 ? Vec3(U(rng), U(rng), 1.5 + U(rng)) : Vec3(s * R * src.back() + t));
      }
      RansacConfig cfg;
      cfg.inlier_threshold = 0.01;
      cfg.seed = trial;
      const auto r = fit_sim3_ransac(src, dst, cfg);
      good += std::abs(r.transform.scale - s) / s < 1e-3 && rotation_angle_between(r.transform.rotation, R) * 180 / M_PI < 0.1 &&
              (r.transform.translation - t).norm() < 1e-3;
    }
    CHECK(good == 10);
  }

  TEST_CASE("hungarian trivial cases") {
    Eigen::MatrixXd one(1, 1);
    one << 0.5;
    CHECK(hungarian_assign(one, 1.0) == std::vector<Match>{{0, 0}});
    Eigen::MatrixXd high = Eigen::MatrixXd::Constant(3, 3, 2.0);
    CHECK(hungarian_assign(high, 1.0).empty());
    CHECK(hungarian_assign(Eigen::MatrixXd(0, 4), 1.0).empty());
    Eigen::MatrixXd inf(2, 2);
    inf << std::numeric_limits<double>::infinity(), 1, 2, std::numeric_limits<double>::infinity();
    CHECK(hungarian_assign(inf, 10) == std::vector<Match>{{0, 1}, {1, 0}});
  }

  TEST_CASE("hungarian prefers more pairs over a cheaper single pair") {
    Eigen::MatrixXd c(2, 2);
    c << 0.1, 0.8, 0.2, 5.0;
    // (0,0) alone costs 0.1 but (0,1)+(1,0) matches both rows.
    CHECK(hungarian_assign(c, 1.0) == std::vector<Match>{{0, 1}, {1, 0}});
  }

  TEST_CASE("hungarian equals permutation enumeration including ties") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 1200; ++trial) {
      const int m = 1 + trial % 7, n = 1 + (trial / 7) % 7;
      Eigen::MatrixXd c(m, n);
      std::uniform_int_distribution<int> small(0, 4);
      std::uniform_real_distribution<double> real(0, 1);
      const bool ties = trial % 2 == 0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) c(i, j) = ties ? small(rng) : real(rng);
      const double max_cost = ties ? 3.5 : 0.8;
      const auto got = hungarian_assign(c, max_cost);
      const auto ref = oracle::brute_force_assignment(c, max_cost);
      CHECK(oracle::row_to_col(got, m) == ref.row_to_col);
    }
  }
}
