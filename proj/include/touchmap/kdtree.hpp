#pragma once

#include "touchmap/camera.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace touchmap {

/// Static 3-d tree for exact nearest-neighbour queries. Ties are resolved towards
/// the smallest point index.
class KdTree {
 public:
  struct Hit {
    int index = -1;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  Hit nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(int i) const { return points_[static_cast<std::size_t>(i)]; }

 private:
  struct Node {
    int begin = 0, end = 0;  // range in order_
    int axis = -1;           // -1 for leaves
    double split = 0;
    int left = -1, right = -1;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace touchmap
