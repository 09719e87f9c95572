#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>
#include <vector>

namespace touchmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole camera with world->camera extrinsics. Images are assumed rectified
/// (no lens distortion).
struct CameraCalibration {
  std::string camera_id;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Mat4 T_cw = Mat4::Identity();
  int image_width = 0;
  int image_height = 0;

  Mat3 K() const;
  Mat3 R() const { return T_cw.topLeftCorner<3, 3>(); }
  Vec3 t() const { return T_cw.topRightCorner<3, 1>(); }
  Vec3 center() const { return -R().transpose() * t(); }

  Vec3 to_camera(const Vec3& world) const { return R() * world + t(); }
  Vec3 to_world(const Vec3& cam) const { return R().transpose() * (cam - t()); }

  /// Throws InvalidArgument when intrinsics or the rotation block are not valid.
  void validate() const;
};

/// Look-at construction with +z as world up: camera x right, y down, z forward.
CameraCalibration make_look_at_camera(std::string id, const Vec3& position, const Vec3& target,
                                      double fx, double fy, double cx, double cy, int width,
                                      int height);

/// Pixel of a world point. Throws BehindCamera when camera-frame z <= 1e-6 m.
Vec2 project(const Vec3& world, const CameraCalibration& cal);

/// World point at pixel (u, v) with camera-frame depth. Throws NonPositiveDepth.
Vec3 backproject(double u, double v, double depth, const CameraCalibration& cal);

/// F with x_j^T F x_i = 0 for homogeneous pixels of a common world point.
Mat3 fundamental_matrix(const CameraCalibration& cal_i, const CameraCalibration& cal_j);

/// Symmetric point-line distance 0.5 * (d(x_j, F x_i) + d(x_i, F^T x_j)).
/// Returns +inf when either epipolar line is numerically null.
double epipolar_distance(const Vec2& x_i, const Vec2& x_j, const Mat3& F);

/// Point-to-line pixel distance of x from the line l = (a, b, c).
double point_line_distance(const Vec2& x, const Vec3& line);

}  // namespace touchmap
