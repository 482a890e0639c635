#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "skelfit/geometry.hpp"
#include "skelfit/pointcloud.hpp"

namespace skelfit {

enum class MatchRule {
  Greedy,     // globally nearest pair first, one-to-one
  Hungarian,  // maximum matches, then minimum total distance
};

struct MatchConfig {
  /// Pairs at distance <= threshold may match.
  double distance_threshold = 0.1;
  MatchRule rule = MatchRule::Greedy;

  void validate() const;
};

struct MatchCounts {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;

  double iou() const;
};

MatchCounts match_keypoints(std::span<const Vec3> predicted, const AnnotationSet& annotations,
                            const MatchConfig& config);

/// TP / (TP + FP + FN) for a single instance.
double miou(std::span<const Vec3> predicted, const AnnotationSet& annotations,
            const MatchConfig& config);

struct DasResult {
  double prediction_to_annotation = 0.0;  // labels carried by prediction index
  double annotation_to_prediction = 0.0;  // prediction indices carried by label
  double score = 0.0;
};

/// Dual Alignment Score between a reference and an evaluation instance.
/// Prediction lists must be aligned (same length, same order semantics).
DasResult dual_alignment(std::span<const Vec3> pred_ref, const AnnotationSet& anno_ref,
                         std::span<const Vec3> pred_eval, const AnnotationSet& anno_eval);
double das(std::span<const Vec3> pred_ref, const AnnotationSet& anno_ref,
           std::span<const Vec3> pred_eval, const AnnotationSet& anno_eval);

inline constexpr double kRepeatabilityRatio = 0.1;

/// Fraction of indices j with ||original[j] - perturbed[j]|| < ratio * model_size.
double repeatability(std::span<const Vec3> original, std::span<const Vec3> perturbed,
                     double model_size, double ratio = kRepeatabilityRatio);

enum HistogramSeries : std::size_t { kSkeletonSeries = 0, kKeypointSeries = 1, kBoxSeries = 2 };

struct DistanceHistogram {
  std::size_t bins = 0;
  double max_distance = 0.0;  // shared range [0, max_distance]
  std::array<std::vector<std::size_t>, 3> counts;
  std::array<double, 3> medians{};

  double bin_width() const { return bins == 0 ? 0.0 : max_distance / static_cast<double>(bins); }
};

/// Nearest distance from every cloud point to the skeleton samples, the
/// keypoints and the bounding-box samples, binned over a common range.
DistanceHistogram skeleton_distance_histogram(const PointCloud& cloud,
                                              std::span<const Vec3> skeleton_samples,
                                              std::span<const Vec3> keypoints,
                                              std::span<const Vec3> box_samples,
                                              std::size_t bins);

double median(std::vector<double> values);

struct MetricReport {
  std::string metric;
  std::vector<double> per_instance;
  double aggregate = 0.0;
  std::string config_json;  // echo of the effective configuration
};

/// aggregate = arithmetic mean of per_instance.
MetricReport make_metric_report(std::string metric, std::vector<double> per_instance,
                                std::string config_json);

}  // namespace skelfit
