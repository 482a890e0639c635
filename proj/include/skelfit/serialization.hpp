#pragma once

#include <span>
#include <string>
#include <vector>

#include "skelfit/metrics.hpp"
#include "skelfit/optimizer.hpp"
#include "skelfit/skeleton.hpp"

// JSON documents exchanged by the command line tool and the C API.

namespace skelfit {

struct SkeletonDocument {
  std::vector<Vec3> keypoints;
  std::vector<Edge> edges;
  std::vector<double> activations;
  SamplingPlan plan;
};

/// { k, keypoints, edges, activations, plan: { M, n } } in that field order.
std::string skeleton_to_json(const SkeletonDocument& doc, int indent = 2);
SkeletonDocument skeleton_from_json(const std::string& text);
SkeletonDocument load_skeleton(const std::string& path);

/// Flat document; unknown keys are rejected with an Argument error.
FitConfig fit_config_from_json(const std::string& text);
std::string fit_config_to_json(const FitConfig& config, int indent = 2);

/// Skeleton (in `frame` coordinates) plus "history": [[L, L_f, L_c, penalty], ...].
/// Contains nothing time-dependent, so identical runs give identical bytes.
std::string fit_report_to_json(const FitReport& report, const NormalizeTransform& frame,
                               int indent = 2);

std::string metric_report_to_json(const MetricReport& report, int indent = 2);
std::string histogram_to_json(const DistanceHistogram& histogram, int indent = 2);

}  // namespace skelfit
