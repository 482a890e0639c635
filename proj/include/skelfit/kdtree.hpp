#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "skelfit/geometry.hpp"
#include "skelfit/pointcloud.hpp"

namespace skelfit {

/// Static 3D k-d tree. Queries return exactly what an exhaustive scan would,
/// including lowest-index tie-breaking.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);

  bool empty() const noexcept { return points_.empty(); }
  std::size_t size() const noexcept { return points_.size(); }

  NearestResult nearest(const Vec3& query) const;

  struct SquaredResult {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };
  SquaredResult nearest_squared(const Vec3& query) const;

 private:
  struct Node {
    std::size_t begin = 0;  // range into order_
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Vec3& query, SquaredResult& best) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace skelfit
