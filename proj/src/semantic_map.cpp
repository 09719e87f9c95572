#include "touchmap/semantic_map.hpp"

#include "touchmap/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>

namespace touchmap {

SemanticCloud::SemanticCloud(int frame, double voxel_size, std::vector<Vec3> positions,
                             std::vector<int> labels, LabelTable label_table)
    : frame_(frame),
      voxel_size_(voxel_size),
      positions_(std::move(positions)),
      labels_(std::move(labels)),
      label_table_(std::move(label_table)),
      index_(positions_) {
  std::map<int, std::vector<Vec3>> pts;
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    per_label_[labels_[i]].global.push_back(static_cast<int>(i));
    pts[labels_[i]].push_back(positions_[i]);
  }
  for (auto& [label, idx] : per_label_) idx.tree = KdTree(std::move(pts[label]));
}

std::vector<int> SemanticCloud::present_labels() const {
  std::vector<int> out;
  for (const auto& [label, idx] : per_label_) out.push_back(label);
  return out;
}

SurfaceHit SemanticCloud::nearest(const Vec3& query) const {
  if (positions_.empty()) throw Error(ErrorKind::EmptyCloud, "nearest-surface query on empty cloud");
  const auto hit = index_.nearest(query);
  return {std::sqrt(hit.squared_distance), labels_[hit.index], positions_[hit.index], hit.index};
}

std::optional<SurfaceHit> SemanticCloud::nearest_with_label(const Vec3& query, int label) const {
  auto it = per_label_.find(label);
  if (it == per_label_.end() || it->second.tree.empty()) return std::nullopt;
  const auto hit = it->second.tree.nearest(query);
  const int g = it->second.global[hit.index];
  return SurfaceHit{std::sqrt(hit.squared_distance), label, positions_[g], g};
}

std::vector<LabeledPoint> backproject_labeled(const LabelGrid& labels, const DepthProvider& depth,
                                              int camera_index, const CameraCalibration& cal,
                                              int stride) {
  if (labels.width != cal.image_width || labels.height != cal.image_height)
    throw Error(ErrorKind::ResolutionMismatch,
                "label grid " + std::to_string(labels.width) + "x" + std::to_string(labels.height) +
                    " does not match camera " + cal.camera_id);
  if (stride < 1) throw Error(ErrorKind::InvalidArgument, "stride must be >= 1");
  std::vector<LabeledPoint> out;
  for (int v = 0; v < labels.height; v += stride) {
    for (int u = 0; u < labels.width; u += stride) {
      const int label = labels.at(u, v);
      if (label == 0) continue;
      const double d = depth.depth(camera_index, u, v);
      if (!(d > 0)) continue;
      out.push_back({backproject(u, v, d, cal), label, cal.camera_id});
    }
  }
  return out;
}

SemanticCloud fuse_clouds(const std::vector<std::vector<LabeledPoint>>& clouds, double voxel_size,
                          int frame, LabelTable label_table) {
  if (!(voxel_size > 0)) throw Error(ErrorKind::InvalidArgument, "voxel_size must be > 0");
  using Key = std::array<long long, 3>;
  std::map<Key, std::vector<std::pair<int, Vec3>>> voxels;
  for (const auto& cloud : clouds) {
    for (const auto& p : cloud) {
      const Key key{static_cast<long long>(std::floor(p.position.x() / voxel_size)),
                    static_cast<long long>(std::floor(p.position.y() / voxel_size)),
                    static_cast<long long>(std::floor(p.position.z() / voxel_size))};
      voxels[key].emplace_back(p.label, p.position);
    }
  }

  std::vector<Vec3> positions;
  std::vector<int> labels;
  positions.reserve(voxels.size());
  labels.reserve(voxels.size());
  for (auto& [key, members] : voxels) {
    // Canonical member order keeps the centroid bit-identical under input permutation.
    std::sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return std::lexicographical_compare(a.second.data(), a.second.data() + 3, b.second.data(),
                                          b.second.data() + 3);
    });
    std::map<int, int> votes;
    for (const auto& m : members) ++votes[m.first];
    int winner = votes.begin()->first, best = 0;
    for (const auto& [label, count] : votes)
      if (count > best) {
        best = count;
        winner = label;
      }
    Vec3 sum = Vec3::Zero();
    for (const auto& m : members)
      if (m.first == winner) sum += m.second;
    positions.push_back(sum / best);
    labels.push_back(winner);
  }
  return SemanticCloud(frame, voxel_size, std::move(positions), std::move(labels), std::move(label_table));
}

void write_cloud_text(const std::filesystem::path& path, const SemanticCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions()[i];
    out << format_fixed(p.x(), 5) << ' ' << format_fixed(p.y(), 5) << ' ' << format_fixed(p.z(), 5)
        << ' ' << cloud.labels()[i] << '\n';
  }
}

}  // namespace touchmap
