#pragma once

#include "touchmap/camera.hpp"

#include <optional>
#include <span>

namespace touchmap {

struct WeightedObservation {
  const CameraCalibration* camera = nullptr;
  Vec2 pixel = Vec2::Zero();
  double weight = 1.0;
};

struct TriangulationResult {
  Vec3 point = Vec3::Zero();
  double mean_reprojection_error = 0;  // px, unweighted over views with w > 0
  int iterations = 0;
};

/// Weighted reprojection cost sum_i w_i |pi_i(X) - u_i|^2; +inf if X is behind any
/// weighted view.
double weighted_reprojection_cost(std::span<const WeightedObservation> obs, const Vec3& X);

/// Linear (DLT) two-view triangulation.
Vec3 triangulate_dlt(const WeightedObservation& a, const WeightedObservation& b);

/// Levenberg-Marquardt minimization of the weighted reprojection cost. Starts from
/// `init_hint` or from DLT on the pair of views whose camera centers are farthest apart.
/// Throws InsufficientViews (< 2 positive weights) or IllConditioned (near-parallel rays).
TriangulationResult triangulate_weighted(std::span<const WeightedObservation> obs,
                                         std::optional<Vec3> init_hint = std::nullopt);

}  // namespace touchmap
