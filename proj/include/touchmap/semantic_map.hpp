#pragma once

#include "touchmap/camera.hpp"
#include "touchmap/depth.hpp"
#include "touchmap/io.hpp"
#include "touchmap/kdtree.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace touchmap {

struct LabeledPoint {
  Vec3 position = Vec3::Zero();
  int label = 0;
  std::string source_camera;
};

struct SurfaceHit {
  double distance = 0;
  int label = 0;
  Vec3 point = Vec3::Zero();
  int index = -1;
};

/// Voxel-fused labelled point cloud with nearest-surface indices. Immutable once built.
class SemanticCloud {
 public:
  SemanticCloud() = default;
  SemanticCloud(int frame, double voxel_size, std::vector<Vec3> positions, std::vector<int> labels,
                LabelTable label_table = {});

  int frame() const { return frame_; }
  double voxel_size() const { return voxel_size_; }
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  const std::vector<Vec3>& positions() const { return positions_; }
  const std::vector<int>& labels() const { return labels_; }
  const LabelTable& label_table() const { return label_table_; }
  std::vector<int> present_labels() const;

  /// Exact nearest point; ties resolved to the smallest point index. Throws EmptyCloud.
  SurfaceHit nearest(const Vec3& query) const;
  /// Exact nearest point carrying `label`, if the label is present.
  std::optional<SurfaceHit> nearest_with_label(const Vec3& query, int label) const;

 private:
  struct LabelIndex {
    KdTree tree;
    std::vector<int> global;  // subset index -> cloud index
  };

  int frame_ = 0;
  double voxel_size_ = 0;
  std::vector<Vec3> positions_;
  std::vector<int> labels_;
  LabelTable label_table_;
  KdTree index_;
  std::map<int, LabelIndex> per_label_;
};

/// Back-project labelled pixels on a stride lattice. Label 0 is background and skipped.
/// Throws ResolutionMismatch when the grid does not match the camera resolution.
std::vector<LabeledPoint> backproject_labeled(const LabelGrid& labels, const DepthProvider& depth,
                                              int camera_index, const CameraCalibration& cal,
                                              int stride);

/// Voxel fusion with per-voxel majority vote (ties to the smallest label id); the voxel
/// representative is the centroid of members carrying the winning label.
SemanticCloud fuse_clouds(const std::vector<std::vector<LabeledPoint>>& clouds, double voxel_size,
                          int frame = 0, LabelTable label_table = {});

inline SurfaceHit nearest_surface(const SemanticCloud& cloud, const Vec3& query) {
  return cloud.nearest(query);
}

/// Text export, one "x y z label_id" line per point.
void write_cloud_text(const std::filesystem::path& path, const SemanticCloud& cloud);

}  // namespace touchmap
