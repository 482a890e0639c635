#include "skelfit/ccd.hpp"

#include <algorithm>
#include <cmath>

#include "parallel.hpp"
#include "skelfit/error.hpp"

namespace skelfit {

void CcdConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw_argument("gamma must be positive and finite");
  if (!(lambda_f >= 0.0) || !std::isfinite(lambda_f)) throw_argument("lambda_f must be non-negative");
  if (!(lambda_c >= 0.0) || !std::isfinite(lambda_c)) throw_argument("lambda_c must be non-negative");
}

namespace {

Vec3 unit_or_zero(const Vec3& from, const Vec3& to, double dist) {
  if (dist < kGradientDistanceFloor) return {};
  return (to - from) * (1.0 / dist);
}

}  // namespace

CcdEvaluator::CcdEvaluator(const PointCloud& input, CcdConfig config)
    : input_(input.points().begin(), input.points().end()),
      input_index_(input.points()),
      config_(config) {
  config_.validate();
}

void CcdEvaluator::check_shapes(const SubCloudSet& subclouds,
                                std::span<const double> activations) const {
  if (subclouds.edge_count() == 0) throw_argument("reconstruction has no sub-clouds");
  if (activations.size() != subclouds.edge_count()) {
    throw_argument("expected " + std::to_string(subclouds.edge_count()) + " activations, got " +
                   std::to_string(activations.size()));
  }
  for (std::size_t i = 0; i < activations.size(); ++i) {
    if (!(activations[i] >= 0.0 && activations[i] <= 1.0)) {
      throw_argument("activation " + std::to_string(i) + " outside [0, 1]");
    }
  }
  for (const auto& p : subclouds.points()) {
    if (!is_finite(p)) throw_argument("sub-cloud point has a non-finite coordinate");
  }
}

LossTerm CcdEvaluator::fidelity(const SubCloudSet& subclouds,
                                std::span<const double> activations) const {
  check_shapes(subclouds, activations);
  const auto points = subclouds.points();
  std::vector<NearestResult> nearest(points.size());
  detail::parallel_for(points.size(), config_.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) nearest[s] = input_index_.nearest(points[s]);
  });

  LossTerm out{0.0, std::vector<Vec3>(points.size()),
               std::vector<double>(subclouds.edge_count(), 0.0)};
  for (std::size_t e = 0; e < subclouds.edge_count(); ++e) {
    double sum = 0.0;
    const std::size_t begin = subclouds.edge_begin(e);
    for (std::size_t s = begin; s < begin + subclouds.edge_size(e); ++s) {
      sum += nearest[s].distance;
      out.grad_points[s] =
          activations[e] * unit_or_zero(input_[nearest[s].index], points[s], nearest[s].distance);
    }
    out.grad_activations[e] = sum;
    out.value += activations[e] * sum;
  }
  if (config_.normalize && !points.empty()) {
    const double scale = 1.0 / static_cast<double>(points.size());
    out.value *= scale;
    for (auto& g : out.grad_points) g *= scale;
    for (auto& g : out.grad_activations) g *= scale;
  }
  return out;
}

CoverageResult CcdEvaluator::coverage(const SubCloudSet& subclouds,
                                      std::span<const double> activations, bool with_trace) const {
  check_shapes(subclouds, activations);
  const std::size_t edges = subclouds.edge_count();
  std::vector<KdTree> trees;
  trees.reserve(edges);
  for (std::size_t e = 0; e < edges; ++e) trees.emplace_back(subclouds.edge(e));

  // Phase 1 (parallel): the selection sequence of every input point. Sorting
  // the per-sub-cloud nearest points by (distance, edge) yields exactly the
  // order in which repeated global-minimum extraction would consume them.
  const std::size_t n = input_.size();
  std::vector<Selection> selections(n * edges);
  std::vector<std::size_t> selected(n, 0);
  detail::parallel_for(n, config_.threads, [&](std::size_t b, std::size_t e_end) {
    std::vector<Selection> candidates;
    candidates.reserve(edges);
    for (std::size_t j = b; j < e_end; ++j) {
      candidates.clear();
      for (std::size_t e = 0; e < edges; ++e) {
        if (trees[e].empty()) continue;
        const auto r = trees[e].nearest(input_[j]);
        candidates.push_back({e, r.index, r.distance});
      }
      std::sort(candidates.begin(), candidates.end(), [](const Selection& l, const Selection& r) {
        return l.distance < r.distance || (l.distance == r.distance && l.edge < r.edge);
      });
      double w = 0.0;
      std::size_t count = 0;
      for (const auto& c : candidates) {
        if (!(w < 1.0)) break;
        selections[j * edges + count++] = c;
        w += activations[c.edge];
      }
      selected[j] = count;
    }
  });

  // Phase 2 (sequential, input order): accumulate exactly as the reference
  // loop does so the value is bitwise reproducible.
  CoverageResult result;
  LossTerm& out = result.loss;
  out.grad_points.assign(subclouds.size(), Vec3{});
  out.grad_activations.assign(edges, 0.0);
  if (with_trace) result.trace.emplace(n);
  const double gamma = config_.gamma;
  for (std::size_t j = 0; j < n; ++j) {
    double w = 0.0;
    const Selection* first = selections.data() + j * edges;
    for (std::size_t r = 0; r < selected[j]; ++r) {
      const Selection& sel = first[r];
      const double a = activations[sel.edge];
      out.value += a * sel.distance;
      w += a;
      const std::size_t flat = subclouds.edge_begin(sel.edge) + sel.point;
      out.grad_points[flat] +=
          a * unit_or_zero(input_[j], subclouds.points()[flat], sel.distance);
      out.grad_activations[sel.edge] += sel.distance;
    }
    const bool saturated = !(w < 1.0);
    if (!saturated) {
      out.value += gamma * (1.0 - w);
      for (std::size_t r = 0; r < selected[j]; ++r) out.grad_activations[first[r].edge] -= gamma;
    }
    if (with_trace) {
      (*result.trace)[j] = PointTrace{std::vector<Selection>(first, first + selected[j]), saturated};
    }
  }
  if (config_.normalize) {
    const double scale = 1.0 / static_cast<double>(n);
    out.value *= scale;
    for (auto& g : out.grad_points) g *= scale;
    for (auto& g : out.grad_activations) g *= scale;
  }
  return result;
}

CcdResult CcdEvaluator::evaluate(const SubCloudSet& subclouds, std::span<const double> activations,
                                 bool with_trace) const {
  LossTerm f = fidelity(subclouds, activations);
  CoverageResult c = coverage(subclouds, activations, with_trace);
  CcdResult out;
  out.fidelity = f.value;
  out.coverage = c.loss.value;
  out.total = config_.lambda_f * f.value + config_.lambda_c * c.loss.value;
  out.grad_points.resize(f.grad_points.size());
  for (std::size_t i = 0; i < out.grad_points.size(); ++i) {
    out.grad_points[i] = config_.lambda_f * f.grad_points[i] + config_.lambda_c * c.loss.grad_points[i];
  }
  out.grad_activations.resize(f.grad_activations.size());
  for (std::size_t i = 0; i < out.grad_activations.size(); ++i) {
    out.grad_activations[i] =
        config_.lambda_f * f.grad_activations[i] + config_.lambda_c * c.loss.grad_activations[i];
  }
  out.trace = std::move(c.trace);
  return out;
}

LossTerm fidelity_loss(const PointCloud& input, const SubCloudSet& subclouds,
                       std::span<const double> activations) {
  return CcdEvaluator(input, CcdConfig{}).fidelity(subclouds, activations);
}

CoverageResult coverage_loss(const PointCloud& input, const SubCloudSet& subclouds,
                             std::span<const double> activations, double gamma, bool with_trace) {
  CcdConfig config;
  config.gamma = gamma;
  return CcdEvaluator(input, config).coverage(subclouds, activations, with_trace);
}

CcdResult ccd(const PointCloud& input, const SubCloudSet& subclouds,
              std::span<const double> activations, const CcdConfig& config, bool with_trace) {
  return CcdEvaluator(input, config).evaluate(subclouds, activations, with_trace);
}

}  // namespace skelfit
