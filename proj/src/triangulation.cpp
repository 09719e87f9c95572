#include "touchmap/triangulation.hpp"

#include "touchmap/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace touchmap {
namespace {

constexpr int kMaxIterations = 50;
constexpr double kStepTolerance = 1e-8;  // meters
constexpr double kMinRayAngle = 1e-4;    // radians; below this all rays count as parallel

Eigen::Matrix<double, 3, 4> projection_matrix(const CameraCalibration& cal) {
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = cal.R();
  rt.col(3) = cal.t();
  return cal.K() * rt;
}

Vec3 ray_direction(const WeightedObservation& o) {
  const auto& c = *o.camera;
  const Vec3 d((o.pixel.x() - c.cx) / c.fx, (o.pixel.y() - c.cy) / c.fy, 1.0);
  return (c.R().transpose() * d).normalized();
}

}  // namespace

double weighted_reprojection_cost(std::span<const WeightedObservation> obs, const Vec3& X) {
  double cost = 0;
  for (const auto& o : obs) {
    if (o.weight <= 0) continue;
    const Vec3 p = o.camera->to_camera(X);
    if (p.z() <= 1e-6) return std::numeric_limits<double>::infinity();
    const Vec2 uv(o.camera->fx * p.x() / p.z() + o.camera->cx,
                  o.camera->fy * p.y() / p.z() + o.camera->cy);
    cost += o.weight * (uv - o.pixel).squaredNorm();
  }
  return cost;
}

Vec3 triangulate_dlt(const WeightedObservation& a, const WeightedObservation& b) {
  Eigen::Matrix4d A;
  const auto Pa = projection_matrix(*a.camera);
  const auto Pb = projection_matrix(*b.camera);
  A.row(0) = a.pixel.x() * Pa.row(2) - Pa.row(0);
  A.row(1) = a.pixel.y() * Pa.row(2) - Pa.row(1);
  A.row(2) = b.pixel.x() * Pb.row(2) - Pb.row(0);
  A.row(3) = b.pixel.y() * Pb.row(2) - Pb.row(1);
  for (int r = 0; r < 4; ++r) A.row(r).normalize();
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-12) throw Error(ErrorKind::IllConditioned, "DLT point at infinity");
  return h.head<3>() / h(3);
}

TriangulationResult triangulate_weighted(std::span<const WeightedObservation> obs,
                                         std::optional<Vec3> init_hint) {
  std::vector<const WeightedObservation*> used;
  for (const auto& o : obs)
    if (o.weight > 0) used.push_back(&o);
  if (used.size() < 2) throw Error(ErrorKind::InsufficientViews, "need >= 2 weighted views");

  double max_angle = 0;
  std::size_t best_a = 0, best_b = 1;
  double best_baseline = -1;
  for (std::size_t a = 0; a < used.size(); ++a) {
    for (std::size_t b = a + 1; b < used.size(); ++b) {
      const double angle = std::acos(std::clamp(ray_direction(*used[a]).dot(ray_direction(*used[b])), -1.0, 1.0));
      max_angle = std::max(max_angle, angle);
      const double baseline = (used[a]->camera->center() - used[b]->camera->center()).norm();
      if (baseline > best_baseline) {
        best_baseline = baseline;
        best_a = a;
        best_b = b;
      }
    }
  }
  if (max_angle < kMinRayAngle) throw Error(ErrorKind::IllConditioned, "rays are near-parallel");

  Vec3 X = init_hint ? *init_hint : triangulate_dlt(*used[best_a], *used[best_b]);
  double cost = weighted_reprojection_cost(obs, X);
  if (!std::isfinite(cost)) {
    // DLT can land behind a view when rays barely intersect; fall back to the
    // midpoint of the two rays' closest approach.
    const Vec3 c0 = used[best_a]->camera->center(), c1 = used[best_b]->camera->center();
    const Vec3 d0 = ray_direction(*used[best_a]), d1 = ray_direction(*used[best_b]);
    const Vec3 w = c0 - c1;
    const double b = d0.dot(d1), d = d0.dot(w), e = d1.dot(w);
    const double denom = 1 - b * b;
    const double s = (b * e - d) / denom, t = (e - b * d) / denom;
    X = 0.5 * (c0 + s * d0 + c1 + t * d1);
    cost = weighted_reprojection_cost(obs, X);
    if (!std::isfinite(cost)) throw Error(ErrorKind::IllConditioned, "no initial point in front of all views");
  }

  double lambda = 1e-3;
  int iter = 0;
  for (; iter < kMaxIterations; ++iter) {
    Mat3 H = Mat3::Zero();
    Vec3 g = Vec3::Zero();
    for (const auto* o : used) {
      const auto& c = *o->camera;
      const Vec3 p = c.to_camera(X);
      const double iz = 1.0 / p.z();
      const Vec2 r(c.fx * p.x() * iz + c.cx - o->pixel.x(), c.fy * p.y() * iz + c.cy - o->pixel.y());
      Eigen::Matrix<double, 2, 3> dp;
      dp << c.fx * iz, 0, -c.fx * p.x() * iz * iz, 0, c.fy * iz, -c.fy * p.y() * iz * iz;
      const Eigen::Matrix<double, 2, 3> J = dp * c.R();
      H += o->weight * J.transpose() * J;
      g += o->weight * J.transpose() * r;
    }

    bool accepted = false;
    Vec3 step = Vec3::Zero();
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Mat3 A = H;
      A.diagonal() *= (1.0 + lambda);
      step = A.ldlt().solve(-g);
      const Vec3 candidate = X + step;
      const double c_new = weighted_reprojection_cost(obs, candidate);
      if (c_new <= cost) {
        X = candidate;
        cost = c_new;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted || step.norm() < kStepTolerance) {
      ++iter;
      break;
    }
  }

  // Condition check on the final normal matrix.
  Mat3 H = Mat3::Zero();
  double err_sum = 0;
  for (const auto* o : used) {
    const auto& c = *o->camera;
    const Vec3 p = c.to_camera(X);
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> dp;
    dp << c.fx * iz, 0, -c.fx * p.x() * iz * iz, 0, c.fy * iz, -c.fy * p.y() * iz * iz;
    const Eigen::Matrix<double, 2, 3> J = dp * c.R();
    H += J.transpose() * J;
    err_sum += (project(X, c) - o->pixel).norm();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(H);
  const double lo = eig.eigenvalues()(0), hi = eig.eigenvalues()(2);
  if (!(hi > 0) || lo / hi < 1e-14) throw Error(ErrorKind::IllConditioned, "normal matrix is singular");

  return {X, err_sum / static_cast<double>(used.size()), iter};
}

}  // namespace touchmap
