#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "skelfit/ccd.hpp"
#include "skelfit/error.hpp"
#include "skelfit/pointcloud.hpp"
#include "skelfit/skeleton.hpp"

namespace skelfit {

enum class KeypointMode {
  Convex,  // keypoints = softmax(logits) . X, always inside the input hull
  Free,    // keypoints are unconstrained 3D parameters
};

struct FitConfig {
  std::size_t k = 0;
  std::size_t total_budget = 2048;
  double learning_rate = 0.01;
  /// Multiplier on learning_rate for the activation logits only.
  double activation_rate_scale = 1.0;
  double lr_decay = 0.5;
  /// Iterations between decays; 0 means a third of the run.
  std::size_t decay_interval = 0;
  std::size_t iterations = 300;
  CcdConfig ccd;
  double lambda_reg = 1.0;
  std::uint64_t seed = 0;
  KeypointMode keypoint_mode = KeypointMode::Convex;
  /// Optional shared initialization: when non-empty (size k), keypoints are
  /// anchored at the input points nearest to these positions instead of at
  /// farthest-point samples.
  std::vector<Vec3> init_keypoints;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  double rate_at(std::size_t iteration) const;
};

/// Weight of the anchor point in each initial softmax row.
inline constexpr double kInitialAnchorWeight = 0.99;

/// Optimizable latent state. The sampling plan is fixed at initialization so
/// that offsets keep their meaning across iterations.
struct FitParams {
  KeypointMode mode = KeypointMode::Convex;
  std::size_t k = 0;
  std::size_t cloud_size = 0;
  /// Convex mode: k x N row-major scores. Free mode: k x 3 coordinates.
  std::vector<double> keypoint_params;
  std::vector<double> activation_logits;
  OffsetTable offsets;
  SamplingPlan plan;
  std::vector<std::size_t> anchors;  // input indices used at initialization

  // Adaptive-moment state, one slot per scalar parameter in the order
  // keypoint_params, activation_logits, offsets (x, y, z interleaved).
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t iteration = 0;

  std::vector<Vec3> keypoints(const PointCloud& cloud) const;
  std::vector<double> activations() const;
  Skeleton skeleton(const PointCloud& cloud) const;
  SubCloudSet subclouds(const PointCloud& cloud) const;
  std::size_t parameter_count() const;
};

struct LossBreakdown {
  double total = 0.0;  // lambda_f * L_f + lambda_c * L_c
  double fidelity = 0.0;
  double coverage = 0.0;
  double penalty = 0.0;  // offset ridge term

  double objective() const { return total + penalty; }
};

struct FitReport {
  Skeleton skeleton;
  std::vector<double> activations;
  SamplingPlan plan;
  SubCloudSet subclouds;
  FitParams params;  // best iterate
  std::vector<LossBreakdown> history;
  std::size_t best_iteration = 0;
  bool converged = false;
  double wall_time_seconds = 0.0;
};

/// Non-finite loss during fitting. Carries the report up to the last finite
/// iterate.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, FitReport partial)
      : Error(ErrorKind::Divergence, message), partial_(std::move(partial)) {}
  const FitReport& partial() const noexcept { return partial_; }

 private:
  FitReport partial_;
};

FitParams init_params(const PointCloud& cloud, const FitConfig& config);

/// Objective and gradient of every parameter at `params`, in the flat order
/// used by the moment vectors.
struct ObjectiveEvaluation {
  LossBreakdown loss;
  std::vector<double> gradient;
};

/// Reusable fitting context for one cloud; builds the spatial index once.
class SkeletonFitter {
 public:
  SkeletonFitter(const PointCloud& cloud, FitConfig config);

  const FitConfig& config() const noexcept { return config_; }
  const PointCloud& cloud() const noexcept { return cloud_; }

  ObjectiveEvaluation evaluate(const FitParams& params) const;
  /// One adaptive-moment update; returns the loss at the incoming params.
  std::pair<FitParams, LossBreakdown> step(const FitParams& params) const;
  FitReport fit() const;
  FitReport fit(FitParams initial) const;

 private:
  FitReport make_report(const FitParams& best, std::vector<LossBreakdown> history,
                        std::size_t best_iteration) const;

  PointCloud cloud_;
  FitConfig config_;
  CcdEvaluator evaluator_;
};

std::pair<FitParams, LossBreakdown> step(const PointCloud& cloud, const FitParams& params,
                                         const FitConfig& config);
FitReport fit(const PointCloud& cloud, const FitConfig& config);

/// Final keypoints in parameter order.
std::vector<Vec3> extract_keypoints(const FitReport& report);

}  // namespace skelfit
