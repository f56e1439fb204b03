#include "dtt/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dtt/error.hpp"

namespace dtt {

KdTree::KdTree(std::vector<Vec3> points) : points_{std::move(points)} {
  if (points_.empty()) throw InputError("cannot build a k-d tree over zero points");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  build(0, points_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) {
    // All points coincide; keep them in one leaf.
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, const Vec3 &query, std::size_t &best_index,
                    double &best_sq) const {
  const Node &n = nodes_[node];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = (points_[idx] - query).squaredNorm();
      if (d < best_sq || (d == best_sq && idx < best_index)) {
        best_sq = d;
        best_index = idx;
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double delta = query[n.axis] - n.split;
  const int near = delta <= 0.0 ? n.left : n.right;
  const int far = delta <= 0.0 ? n.right : n.left;
  search(near, query, best_index, best_sq);
  // Visit on equality too, so ties on the boundary can still win by index.
  if (delta * delta <= best_sq) search(far, query, best_index, best_sq);
}

Neighbor KdTree::nearest(const Vec3 &query) const {
  std::size_t best_index = std::numeric_limits<std::size_t>::max();
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, query, best_index, best_sq);
  return {best_index, std::sqrt(best_sq)};
}

}  // namespace dtt
