#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dtt/geometry.hpp"

namespace dtt {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

// Exact nearest-neighbor index over a fixed 3D point set. Equal distances
// resolve to the lowest point index. Immutable after construction, so
// concurrent queries are safe.
class KdTree {
 public:
  // Throws InputError on an empty point set.
  explicit KdTree(std::vector<Vec3> points);
  explicit KdTree(std::span<const Vec3> points)
      : KdTree(std::vector<Vec3>(points.begin(), points.end())) {}

  Neighbor nearest(const Vec3 &query) const;

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3> &points() const { return points_; }

 private:
  struct Node {
    int axis = -1;          // -1 for a leaf
    double split = 0.0;
    std::size_t begin = 0;  // leaf range into order_
    std::size_t end = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec3 &query, std::size_t &best_index,
              double &best_sq) const;

  static constexpr std::size_t kLeafSize = 8;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace dtt
