#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "skelfit/geometry.hpp"
#include "skelfit/kdtree.hpp"
#include "skelfit/pointcloud.hpp"
#include "skelfit/skeleton.hpp"

namespace skelfit {

/// Composite Chamfer Distance settings.
struct CcdConfig {
  double gamma = 20.0;  // penalty for unsaturated activation mass
  double lambda_f = 1.0;
  double lambda_c = 1.0;
  /// Divide fidelity by the reconstruction size and coverage by N.
  bool normalize = false;
  /// Worker threads for loss evaluation; 0 = hardware concurrency. Results are
  /// bitwise identical for every value.
  unsigned threads = 1;

  void validate() const;
};

/// Distances below this have a zero (sub)gradient.
inline constexpr double kGradientDistanceFloor = 1e-12;

/// A loss value with its gradients w.r.t. every sub-cloud point (flat order)
/// and every activation.
struct LossTerm {
  double value = 0.0;
  std::vector<Vec3> grad_points;
  std::vector<double> grad_activations;
};

struct Selection {
  std::size_t edge = 0;
  std::size_t point = 0;  // index within the edge's sub-cloud
  double distance = 0.0;
};

/// Coverage selection sequence for one input point.
struct PointTrace {
  std::vector<Selection> selections;
  bool saturated = false;  // accumulated activation reached 1
};

struct CoverageResult {
  LossTerm loss;
  std::optional<std::vector<PointTrace>> trace;
};

struct CcdResult {
  double fidelity = 0.0;
  double coverage = 0.0;
  double total = 0.0;
  std::vector<Vec3> grad_points;
  std::vector<double> grad_activations;
  std::optional<std::vector<PointTrace>> trace;
};

/// Evaluates fidelity / coverage against a fixed input cloud. Holds a spatial
/// index over the input so repeated evaluations (one per optimizer step) do
/// not rebuild it. Evaluation is const and thread-safe.
class CcdEvaluator {
 public:
  CcdEvaluator(const PointCloud& input, CcdConfig config);

  const CcdConfig& config() const noexcept { return config_; }
  std::size_t input_size() const noexcept { return input_.size(); }

  LossTerm fidelity(const SubCloudSet& subclouds, std::span<const double> activations) const;
  CoverageResult coverage(const SubCloudSet& subclouds, std::span<const double> activations,
                          bool with_trace = false) const;
  CcdResult evaluate(const SubCloudSet& subclouds, std::span<const double> activations,
                     bool with_trace = false) const;

 private:
  void check_shapes(const SubCloudSet& subclouds, std::span<const double> activations) const;

  std::vector<Vec3> input_;
  KdTree input_index_;
  CcdConfig config_;
};

/// sum_i a_i sum_{p in X_i} min_{q in X} ||p - q||
LossTerm fidelity_loss(const PointCloud& input, const SubCloudSet& subclouds,
                       std::span<const double> activations);

/// Per input point: consume sub-clouds nearest-first until the consumed
/// activations reach 1, charging a_i * distance for each, then gamma times any
/// unsaturated remainder.
CoverageResult coverage_loss(const PointCloud& input, const SubCloudSet& subclouds,
                             std::span<const double> activations, double gamma,
                             bool with_trace = false);

/// lambda_f * fidelity + lambda_c * coverage.
CcdResult ccd(const PointCloud& input, const SubCloudSet& subclouds,
              std::span<const double> activations, const CcdConfig& config,
              bool with_trace = false);

}  // namespace skelfit
