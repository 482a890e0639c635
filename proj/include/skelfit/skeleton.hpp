#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "skelfit/geometry.hpp"

namespace skelfit {

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  friend constexpr bool operator==(const Edge&, const Edge&) = default;
};

/// All pairs (i, j), i < j, in lexicographic order. k >= 2.
std::vector<Edge> enumerate_edges(std::size_t k);

constexpr std::size_t edge_count(std::size_t k) { return k * (k - 1) / 2; }

/// Complete graph over k ordered keypoints.
struct Skeleton {
  std::vector<Vec3> keypoints;
  std::vector<Edge> edges;

  static Skeleton from_keypoints(std::vector<Vec3> keypoints);
  double edge_length(std::size_t edge) const;
};

struct SamplingPlan {
  std::size_t total_budget = 0;
  std::vector<std::size_t> counts;  // one per edge, each >= 1

  std::size_t total() const;
  friend bool operator==(const SamplingPlan&, const SamplingPlan&) = default;
};

/// n_i = max(1, round(M * L_i / sum L)). When every edge has zero length each
/// edge gets a single sample.
SamplingPlan plan_sampling(const Skeleton& skeleton, std::size_t total_budget);

/// Per-edge lists of 3D vectors stored contiguously. Used both for sub-clouds
/// (sampled points) and for the matching offset tables.
class EdgePointTable {
 public:
  EdgePointTable() = default;
  /// `offsets` has edge_count + 1 non-decreasing entries starting at 0 and
  /// ending at points.size().
  EdgePointTable(std::vector<Vec3> points, std::vector<std::size_t> offsets);

  static EdgePointTable zeros(const SamplingPlan& plan);

  std::size_t edge_count() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t size() const noexcept { return points_.size(); }
  std::size_t edge_size(std::size_t edge) const { return offsets_[edge + 1] - offsets_[edge]; }
  std::size_t edge_begin(std::size_t edge) const { return offsets_[edge]; }

  std::span<const Vec3> edge(std::size_t i) const {
    return std::span<const Vec3>(points_).subspan(offsets_[i], edge_size(i));
  }
  std::span<Vec3> edge(std::size_t i) {
    return std::span<Vec3>(points_).subspan(offsets_[i], edge_size(i));
  }

  /// Edge that owns the flat index.
  std::size_t edge_of(std::size_t flat_index) const;

  std::span<const Vec3> points() const noexcept { return points_; }
  std::span<Vec3> points() noexcept { return points_; }
  std::span<const std::size_t> offsets() const noexcept { return offsets_; }

  bool same_shape(const EdgePointTable& other) const { return offsets_ == other.offsets_; }

  friend bool operator==(const EdgePointTable&, const EdgePointTable&) = default;

 private:
  std::vector<Vec3> points_;
  std::vector<std::size_t> offsets_;
};

using SubCloudSet = EdgePointTable;
using OffsetTable = EdgePointTable;

/// Position of sample `slot` of `count` along its edge: midpoint rule.
constexpr double sample_parameter(std::size_t slot, std::size_t count) {
  return (static_cast<double>(slot) + 0.5) / static_cast<double>(count);
}

/// Raw samples P_i: K_u + t (K_v - K_u) at t = (s + 0.5) / n_i.
SubCloudSet sample_edges(const Skeleton& skeleton, const SamplingPlan& plan);

/// X_i = P_i + B_i.
SubCloudSet apply_offsets(const SubCloudSet& raw, const OffsetTable& offsets);

struct OffsetPenalty {
  double value = 0.0;
  OffsetTable gradient;
};

/// lambda * sum ||B||^2 with gradient 2 * lambda * B.
OffsetPenalty offset_penalty(const OffsetTable& offsets, double lambda);

}  // namespace skelfit
