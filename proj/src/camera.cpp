#include "touchmap/camera.hpp"

#include "touchmap/error.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SVD>

namespace touchmap {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BehindCamera: return "BehindCamera";
    case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::DegenerateBaseline: return "DegenerateBaseline";
    case ErrorKind::InsufficientViews: return "InsufficientViews";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::TooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorKind::NoConsensus: return "NoConsensus";
    case ErrorKind::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Mat3 CameraCalibration::K() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

void CameraCalibration::validate() const {
  if (!(fx > 0) || !(fy > 0))
    throw Error(ErrorKind::InvalidArgument, "camera " + camera_id + ": focal lengths must be > 0");
  if (!(cx > 0 && cx < image_width && cy > 0 && cy < image_height))
    throw Error(ErrorKind::InvalidArgument, "camera " + camera_id + ": principal point outside image");
  const Mat3 r = R();
  if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-9 || std::abs(r.determinant() - 1.0) > 1e-9)
    throw Error(ErrorKind::InvalidArgument, "camera " + camera_id + ": rotation not orthonormal");
  if (T_cw.row(3) != Eigen::RowVector4d(0, 0, 0, 1))
    throw Error(ErrorKind::InvalidArgument, "camera " + camera_id + ": T_cw last row must be 0 0 0 1");
}

CameraCalibration make_look_at_camera(std::string id, const Vec3& position, const Vec3& target,
                                      double fx, double fy, double cx, double cy, int width,
                                      int height) {
  const Vec3 forward = (target - position).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = Vec3::UnitX();
  right.normalize();
  const Vec3 down = forward.cross(right).normalized();

  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  // Re-orthonormalize so the rotation passes the 1e-9 validity checks.
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = svd.matrixU() * svd.matrixV().transpose();

  CameraCalibration cal;
  cal.camera_id = std::move(id);
  cal.fx = fx;
  cal.fy = fy;
  cal.cx = cx;
  cal.cy = cy;
  cal.image_width = width;
  cal.image_height = height;
  cal.T_cw.setIdentity();
  cal.T_cw.topLeftCorner<3, 3>() = r;
  cal.T_cw.topRightCorner<3, 1>() = -r * position;
  return cal;
}

Vec2 project(const Vec3& world, const CameraCalibration& cal) {
  const Vec3 p = cal.to_camera(world);
  if (p.z() <= 1e-6) throw Error(ErrorKind::BehindCamera, "point behind camera " + cal.camera_id);
  return {cal.fx * p.x() / p.z() + cal.cx, cal.fy * p.y() / p.z() + cal.cy};
}

Vec3 backproject(double u, double v, double depth, const CameraCalibration& cal) {
  if (!(depth > 0)) throw Error(ErrorKind::NonPositiveDepth, "depth must be > 0");
  const Vec3 p((u - cal.cx) * depth / cal.fx, (v - cal.cy) * depth / cal.fy, depth);
  return cal.to_world(p);
}

Mat3 fundamental_matrix(const CameraCalibration& cal_i, const CameraCalibration& cal_j) {
  if ((cal_i.center() - cal_j.center()).norm() < 1e-6)
    throw Error(ErrorKind::DegenerateBaseline,
                "cameras " + cal_i.camera_id + " and " + cal_j.camera_id + " share a center");
  // Relative pose i -> j.
  const Mat3 r = cal_j.R() * cal_i.R().transpose();
  const Vec3 t = cal_j.t() - r * cal_i.t();
  Mat3 tx;
  tx << 0, -t.z(), t.y(), t.z(), 0, -t.x(), -t.y(), t.x(), 0;
  const Mat3 E = tx * r;
  const Mat3 F = cal_j.K().inverse().transpose() * E * cal_i.K().inverse();
  return F / F.norm();
}

double point_line_distance(const Vec2& x, const Vec3& line) {
  const double n = std::hypot(line.x(), line.y());
  if (n < 1e-12) return std::numeric_limits<double>::infinity();
  return std::abs(line.x() * x.x() + line.y() * x.y() + line.z()) / n;
}

double epipolar_distance(const Vec2& x_i, const Vec2& x_j, const Mat3& F) {
  const Vec3 hi(x_i.x(), x_i.y(), 1.0);
  const Vec3 hj(x_j.x(), x_j.y(), 1.0);
  const double dj = point_line_distance(x_j, F * hi);
  const double di = point_line_distance(x_i, F.transpose() * hj);
  if (!std::isfinite(dj) || !std::isfinite(di)) return std::numeric_limits<double>::infinity();
  return 0.5 * (dj + di);
}

}  // namespace touchmap
