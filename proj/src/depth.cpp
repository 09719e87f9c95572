#include "touchmap/depth.hpp"

#include <cmath>

namespace touchmap {

double GridDepthProvider::depth(int camera_index, int u, int v) const {
  auto it = grids_.find(camera_index);
  if (it == grids_.end() || !it->second.contains(u, v)) return 0.0;
  return it->second.at(u, v) * 1e-3;
}

std::optional<PatchStats> depth_patch(const DepthProvider& depth, int camera_index, double u,
                                      double v, int w, int image_width, int image_height) {
  const int cu = static_cast<int>(std::floor(u)), cv = static_cast<int>(std::floor(v));
  const int half = w / 2;
  double sum = 0, sum_sq = 0;
  int n = 0;
  for (int dv = -half; dv < w - half; ++dv) {
    for (int du = -half; du < w - half; ++du) {
      const int pu = cu + du, pv = cv + dv;
      if (pu < 0 || pv < 0 || pu >= image_width || pv >= image_height) continue;
      const double d = depth.depth(camera_index, pu, pv);
      if (!(d > 0)) continue;
      sum += d;
      sum_sq += d * d;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  PatchStats s;
  s.valid = n;
  s.mean = sum / n;
  s.variance = std::max(0.0, sum_sq / n - s.mean * s.mean);
  return s;
}

}  // namespace touchmap
