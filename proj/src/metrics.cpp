#include "skelfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "skelfit/error.hpp"
#include "skelfit/kdtree.hpp"

namespace skelfit {

void MatchConfig::validate() const {
  if (!(distance_threshold > 0.0) || !std::isfinite(distance_threshold)) {
    throw_argument("distance threshold must be positive and finite");
  }
}

double MatchCounts::iou() const {
  const std::size_t denom = true_positives + false_positives + false_negatives;
  return denom == 0 ? 0.0 : static_cast<double>(true_positives) / static_cast<double>(denom);
}

namespace {

std::size_t greedy_matches(std::span<const Vec3> pred, std::span<const Vec3> anno, double threshold) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < anno.size(); ++j) {
      const double d = distance(pred[i], anno[j]);
      if (d <= threshold) pairs.emplace_back(d, i, j);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> pred_used(pred.size(), false);
  std::vector<bool> anno_used(anno.size(), false);
  std::size_t matches = 0;
  for (const auto& [d, i, j] : pairs) {
    if (pred_used[i] || anno_used[j]) continue;
    pred_used[i] = anno_used[j] = true;
    ++matches;
  }
  return matches;
}

// Square min-cost assignment (shortest augmenting path, O(n^3)). Returns the
// column assigned to each row.
std::vector<std::size_t> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::size_t hungarian_matches(std::span<const Vec3> pred, std::span<const Vec3> anno, double threshold) {
  // Rows: predictions then dummies; columns: annotations then dummies. Leaving
  // an item unmatched costs `unmatched`, large enough that one more match
  // always beats any distance saving.
  const std::size_t np = pred.size();
  const std::size_t na = anno.size();
  const std::size_t n = np + na;
  const double unmatched = static_cast<double>(n) * threshold + 1.0;
  const double forbidden = 4.0 * unmatched * static_cast<double>(n) + 1.0;
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i < np && j < na) {
        const double d = distance(pred[i], anno[j]);
        cost[i][j] = d <= threshold ? d : forbidden;
      } else if (i < np || j < na) {
        cost[i][j] = unmatched;
      }
    }
  }
  const auto assignment = solve_assignment(cost);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < np; ++i) {
    const std::size_t j = assignment[i];
    if (j < na && distance(pred[i], anno[j]) <= threshold) ++matches;
  }
  return matches;
}

}  // namespace

MatchCounts match_keypoints(std::span<const Vec3> predicted, const AnnotationSet& annotations,
                            const MatchConfig& config) {
  config.validate();
  if (predicted.empty()) throw_argument("miou: no predicted keypoints");
  const auto anno = annotations.positions();
  const std::size_t tp = config.rule == MatchRule::Greedy
                             ? greedy_matches(predicted, anno, config.distance_threshold)
                             : hungarian_matches(predicted, anno, config.distance_threshold);
  return {tp, predicted.size() - tp, anno.size() - tp};
}

double miou(std::span<const Vec3> predicted, const AnnotationSet& annotations,
            const MatchConfig& config) {
  return match_keypoints(predicted, annotations, config).iou();
}

namespace {

std::size_t nearest_index(const Vec3& q, std::span<const Vec3> target) {
  return nearest_neighbor(q, target).index;
}

}  // namespace

DasResult dual_alignment(std::span<const Vec3> pred_ref, const AnnotationSet& anno_ref,
                         std::span<const Vec3> pred_eval, const AnnotationSet& anno_eval) {
  if (pred_ref.empty()) throw_argument("das: empty prediction list");
  if (pred_ref.size() != pred_eval.size()) {
    throw_argument("das: prediction lists differ in length (" + std::to_string(pred_ref.size()) +
                   " vs " + std::to_string(pred_eval.size()) + ")");
  }
  const auto ref_pos = anno_ref.positions();
  const auto eval_pos = anno_eval.positions();

  // Predictions carry semantic labels learned on the reference.
  std::size_t correct = 0;
  for (std::size_t j = 0; j < pred_ref.size(); ++j) {
    const int label = anno_ref[nearest_index(pred_ref[j], ref_pos)].semantic_id;
    if (anno_eval[nearest_index(pred_eval[j], eval_pos)].semantic_id == label) ++correct;
  }
  DasResult out;
  out.prediction_to_annotation = static_cast<double>(correct) / static_cast<double>(pred_ref.size());

  // Annotations carry prediction indices learned on the reference; they are
  // paired across instances by semantic label.
  std::size_t checked = 0;
  correct = 0;
  for (std::size_t m = 0; m < anno_ref.size(); ++m) {
    const std::size_t predicted_index = nearest_index(ref_pos[m], pred_ref);
    const auto match = std::find_if(
        anno_eval.keypoints().begin(), anno_eval.keypoints().end(),
        [&](const Annotation& a) { return a.semantic_id == anno_ref[m].semantic_id; });
    if (match == anno_eval.keypoints().end()) continue;
    ++checked;
    if (nearest_index(match->position, pred_eval) == predicted_index) ++correct;
  }
  out.annotation_to_prediction =
      checked == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(checked);
  out.score = 0.5 * (out.prediction_to_annotation + out.annotation_to_prediction);
  return out;
}

double das(std::span<const Vec3> pred_ref, const AnnotationSet& anno_ref,
           std::span<const Vec3> pred_eval, const AnnotationSet& anno_eval) {
  return dual_alignment(pred_ref, anno_ref, pred_eval, anno_eval).score;
}

double repeatability(std::span<const Vec3> original, std::span<const Vec3> perturbed,
                     double model_size, double ratio) {
  if (original.size() != perturbed.size()) {
    throw_argument("repeatability: keypoint lists differ in length (" +
                   std::to_string(original.size()) + " vs " + std::to_string(perturbed.size()) + ")");
  }
  if (original.empty()) throw_argument("repeatability: empty keypoint lists");
  if (!(model_size > 0.0) || !(ratio > 0.0)) throw_argument("repeatability: threshold must be positive");
  const double threshold = ratio * model_size;
  std::size_t repeatable = 0;
  for (std::size_t j = 0; j < original.size(); ++j) {
    if (distance(original[j], perturbed[j]) < threshold) ++repeatable;
  }
  return static_cast<double>(repeatable) / static_cast<double>(original.size());
}

double median(std::vector<double> values) {
  if (values.empty()) throw_argument("median of an empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

DistanceHistogram skeleton_distance_histogram(const PointCloud& cloud,
                                              std::span<const Vec3> skeleton_samples,
                                              std::span<const Vec3> keypoints,
                                              std::span<const Vec3> box_samples, std::size_t bins) {
  if (bins == 0) throw_argument("histogram needs at least one bin");
  const std::array<std::span<const Vec3>, 3> targets{skeleton_samples, keypoints, box_samples};
  std::array<std::vector<double>, 3> distances;
  double max_distance = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    if (targets[s].empty()) throw_argument("histogram target set is empty");
    const KdTree tree(targets[s]);
    distances[s].reserve(cloud.size());
    for (const auto& p : cloud) {
      distances[s].push_back(tree.nearest(p).distance);
      max_distance = std::max(max_distance, distances[s].back());
    }
  }
  DistanceHistogram h;
  h.bins = bins;
  h.max_distance = max_distance;
  for (std::size_t s = 0; s < 3; ++s) {
    h.counts[s].assign(bins, 0);
    for (const double d : distances[s]) {
      std::size_t bin = 0;
      if (max_distance > 0.0) {
        bin = std::min(bins - 1, static_cast<std::size_t>(d / max_distance * static_cast<double>(bins)));
      }
      ++h.counts[s][bin];
    }
    h.medians[s] = median(distances[s]);
  }
  return h;
}

MetricReport make_metric_report(std::string metric, std::vector<double> per_instance,
                                std::string config_json) {
  MetricReport r{std::move(metric), std::move(per_instance), 0.0, std::move(config_json)};
  if (!r.per_instance.empty()) {
    r.aggregate = std::accumulate(r.per_instance.begin(), r.per_instance.end(), 0.0) /
                  static_cast<double>(r.per_instance.size());
  }
  return r;
}

}  // namespace skelfit
