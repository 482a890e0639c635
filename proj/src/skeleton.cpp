#include "skelfit/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skelfit/error.hpp"

namespace skelfit {

std::vector<Edge> enumerate_edges(std::size_t k) {
  if (k < 2) throw_argument("a skeleton needs at least 2 keypoints, got " + std::to_string(k));
  std::vector<Edge> edges;
  edges.reserve(edge_count(k));
  for (std::size_t i = 0; i + 1 < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) edges.push_back({i, j});
  }
  return edges;
}

Skeleton Skeleton::from_keypoints(std::vector<Vec3> keypoints) {
  auto edges = enumerate_edges(keypoints.size());
  return {std::move(keypoints), std::move(edges)};
}

double Skeleton::edge_length(std::size_t edge) const {
  return distance(keypoints[edges[edge].u], keypoints[edges[edge].v]);
}

std::size_t SamplingPlan::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

SamplingPlan plan_sampling(const Skeleton& skeleton, std::size_t total_budget) {
  const std::size_t edges = skeleton.edges.size();
  if (total_budget < edges) {
    throw_argument("sample budget " + std::to_string(total_budget) + " is below the edge count " +
                   std::to_string(edges));
  }
  std::vector<double> lengths(edges);
  double sum = 0.0;
  for (std::size_t i = 0; i < edges; ++i) {
    lengths[i] = skeleton.edge_length(i);
    sum += lengths[i];
  }
  SamplingPlan plan{total_budget, std::vector<std::size_t>(edges, 1)};
  if (sum > 0.0) {
    const double budget = static_cast<double>(total_budget);
    for (std::size_t i = 0; i < edges; ++i) {
      const auto n = std::llround(budget * lengths[i] / sum);
      plan.counts[i] = static_cast<std::size_t>(std::max<long long>(1, n));
    }
  }
  return plan;
}

EdgePointTable::EdgePointTable(std::vector<Vec3> points, std::vector<std::size_t> offsets)
    : points_(std::move(points)), offsets_(std::move(offsets)) {
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != points_.size() ||
      !std::is_sorted(offsets_.begin(), offsets_.end())) {
    throw_argument("edge offsets must rise from 0 to the point count");
  }
}

EdgePointTable EdgePointTable::zeros(const SamplingPlan& plan) {
  std::vector<std::size_t> offsets(plan.counts.size() + 1, 0);
  std::partial_sum(plan.counts.begin(), plan.counts.end(), offsets.begin() + 1);
  std::vector<Vec3> points(offsets.back());
  return EdgePointTable(std::move(points), std::move(offsets));
}

std::size_t EdgePointTable::edge_of(std::size_t flat_index) const {
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat_index);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

SubCloudSet sample_edges(const Skeleton& skeleton, const SamplingPlan& plan) {
  if (plan.counts.size() != skeleton.edges.size()) {
    throw_argument("sampling plan has " + std::to_string(plan.counts.size()) + " edges, skeleton has " +
                   std::to_string(skeleton.edges.size()));
  }
  SubCloudSet out = EdgePointTable::zeros(plan);
  for (std::size_t e = 0; e < skeleton.edges.size(); ++e) {
    const Vec3& a = skeleton.keypoints[skeleton.edges[e].u];
    const Vec3& b = skeleton.keypoints[skeleton.edges[e].v];
    const Vec3 d = b - a;
    auto samples = out.edge(e);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      samples[s] = a + sample_parameter(s, samples.size()) * d;
    }
  }
  return out;
}

SubCloudSet apply_offsets(const SubCloudSet& raw, const OffsetTable& offsets) {
  if (!raw.same_shape(offsets)) throw_argument("offset table shape does not match the sub-clouds");
  SubCloudSet out = raw;
  auto pts = out.points();
  const auto off = offsets.points();
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] += off[i];
  return out;
}

OffsetPenalty offset_penalty(const OffsetTable& offsets, double lambda) {
  OffsetPenalty result{0.0, offsets};
  for (auto& b : result.gradient.points()) {
    result.value += squared_norm(b);
    b *= 2.0 * lambda;
  }
  result.value *= lambda;
  return result;
}

}  // namespace skelfit
