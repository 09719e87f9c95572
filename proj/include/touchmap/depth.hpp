#pragma once

#include "touchmap/io.hpp"

#include <map>
#include <optional>

namespace touchmap {

/// Per-frame depth source. Depth is camera-frame z in meters; values <= 0 are invalid.
class DepthProvider {
 public:
  virtual ~DepthProvider() = default;
  virtual double depth(int camera_index, int u, int v) const = 0;
};

/// Depth from DEP1 grids keyed by camera index.
class GridDepthProvider final : public DepthProvider {
 public:
  void set(int camera_index, DepthGridMm grid) { grids_[camera_index] = std::move(grid); }
  bool has(int camera_index) const { return grids_.count(camera_index) != 0; }
  double depth(int camera_index, int u, int v) const override;

 private:
  std::map<int, DepthGridMm> grids_;
};

struct PatchStats {
  double mean = 0;
  double variance = 0;
  int valid = 0;
};

/// Mean and population variance of valid depths in a w x w patch centred on the
/// pixel containing (u, v). Pixels outside the image count as invalid.
std::optional<PatchStats> depth_patch(const DepthProvider& depth, int camera_index, double u,
                                      double v, int w, int image_width, int image_height);

}  // namespace touchmap
