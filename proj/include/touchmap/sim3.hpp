#pragma once

#include "touchmap/camera.hpp"

#include <cstdint>
#include <span>

namespace touchmap {

/// Similarity transform x -> s * R * x + t.
struct Sim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Sim3 inverse() const;
  Sim3 compose(const Sim3& other) const;  // this * other
};

struct Sim3FitReport {
  Sim3 transform;
  int inlier_count = 0;
  double rms_inliers = 0;  // sigma_fit, meters
  int iterations = 0;
};

struct RansacConfig {
  int iterations = 256;
  double inlier_threshold = 0.015;  // meters
  int min_inliers = -1;             // < 0: max(20, 10% of correspondences)
  std::uint64_t seed = 0;
};

/// Closed-form least-squares similarity mapping src onto dst (centroids, SVD of the
/// cross-covariance with reflection guard, scale from variance ratio).
Sim3 fit_sim3_closed_form(std::span<const Vec3> src, std::span<const Vec3> dst);

/// RANSAC over 3-point samples followed by a refit on the consensus set.
/// Throws TooFewCorrespondences or NoConsensus.
Sim3FitReport fit_sim3_ransac(std::span<const Vec3> src, std::span<const Vec3> dst,
                              const RansacConfig& cfg = {});

/// Rotation angle of R_a^T R_b in radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace touchmap
