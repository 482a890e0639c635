#include "skelfit/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "skelfit/error.hpp"

namespace skelfit {

namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    build(0, points_.size());
  }
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end, -1, 0.0, 0, 0});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    const Vec3& p = points_[order_[i]];
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as a leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t l, std::size_t r) { return points_[l][axis] < points_[r][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

// Left subtree holds coordinates <= split, right holds >= split, so the plane
// distance is a lower bound for every point on the far side. Far subtrees are
// visited on equality too, which keeps lowest-index tie-breaking exact.
void KdTree::search(std::size_t id, const Vec3& query, SquaredResult& best) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const double sq = squared_distance(query, points_[idx]);
      if (sq < best.squared_distance || (sq == best.squared_distance && idx < best.index)) {
        best = {idx, sq};
      }
    }
    return;
  }
  const double diff = query[static_cast<std::size_t>(node.axis)] - node.split;
  const std::size_t near = diff <= 0.0 ? node.left : node.right;
  const std::size_t far = diff <= 0.0 ? node.right : node.left;
  search(near, query, best);
  if (diff * diff <= best.squared_distance) search(far, query, best);
}

KdTree::SquaredResult KdTree::nearest_squared(const Vec3& query) const {
  if (points_.empty()) throw_argument("KdTree::nearest on an empty tree");
  SquaredResult best{std::numeric_limits<std::size_t>::max(),
                     std::numeric_limits<double>::infinity()};
  search(0, query, best);
  return best;
}

NearestResult KdTree::nearest(const Vec3& query) const {
  const auto r = nearest_squared(query);
  return {r.index, std::sqrt(r.squared_distance)};
}

}  // namespace skelfit
