#include "skelfit/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace skelfit {

void FitConfig::validate() const {
  if (k < 2) throw_argument("k must be at least 2");
  if (iterations < 1) throw_argument("iterations must be at least 1");
  if (total_budget < edge_count(k)) {
    throw_argument("total_budget must be at least the edge count " + std::to_string(edge_count(k)));
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw_argument("learning_rate must be finite and non-negative");
  }
  if (!(activation_rate_scale >= 0.0) || !std::isfinite(activation_rate_scale)) {
    throw_argument("activation_rate_scale must be finite and non-negative");
  }
  if (!(lr_decay > 0.0) || !std::isfinite(lr_decay)) throw_argument("lr_decay must be positive");
  if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) {
    throw_argument("lambda_reg must be non-negative");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw_argument("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw_argument("adam_epsilon must be positive");
  if (!init_keypoints.empty() && init_keypoints.size() != k) {
    throw_argument("init_keypoints must hold exactly k points");
  }
  ccd.validate();
}

double FitConfig::rate_at(std::size_t iteration) const {
  const std::size_t interval = decay_interval != 0 ? decay_interval : std::max<std::size_t>(1, iterations / 3);
  return learning_rate * std::pow(lr_decay, static_cast<double>(iteration / interval));
}

// ---------------------------------------------------------------------------
// FitParams

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Row-wise softmax of the k x N logits.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t k, std::size_t n) {
  std::vector<double> weights(logits.begin(), logits.end());
  for (std::size_t r = 0; r < k; ++r) {
    auto row = std::span<double>(weights).subspan(r * n, n);
    const double max = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(v - max);
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }
  return weights;
}

}  // namespace

std::vector<Vec3> FitParams::keypoints(const PointCloud& cloud) const {
  std::vector<Vec3> out(k);
  if (mode == KeypointMode::Free) {
    for (std::size_t r = 0; r < k; ++r) {
      out[r] = {keypoint_params[3 * r], keypoint_params[3 * r + 1], keypoint_params[3 * r + 2]};
    }
    return out;
  }
  const auto weights = softmax_rows(keypoint_params, k, cloud_size);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t j = 0; j < cloud_size; ++j) out[r] += weights[r * cloud_size + j] * cloud[j];
  }
  return out;
}

std::vector<double> FitParams::activations() const {
  std::vector<double> a(activation_logits.size());
  std::transform(activation_logits.begin(), activation_logits.end(), a.begin(), sigmoid);
  return a;
}

Skeleton FitParams::skeleton(const PointCloud& cloud) const {
  return Skeleton::from_keypoints(keypoints(cloud));
}

SubCloudSet FitParams::subclouds(const PointCloud& cloud) const {
  return apply_offsets(sample_edges(skeleton(cloud), plan), offsets);
}

std::size_t FitParams::parameter_count() const {
  return keypoint_params.size() + activation_logits.size() + 3 * offsets.size();
}

FitParams init_params(const PointCloud& cloud, const FitConfig& config) {
  config.validate();
  const std::size_t n = cloud.size();
  if (config.k > n) {
    throw_argument("k=" + std::to_string(config.k) + " exceeds the cloud size " + std::to_string(n));
  }
  FitParams p;
  p.mode = config.keypoint_mode;
  p.k = config.k;
  p.cloud_size = n;
  if (config.init_keypoints.empty()) {
    p.anchors = farthest_point_sample(cloud, config.k, config.seed);
  } else {
    for (const auto& q : config.init_keypoints) p.anchors.push_back(nearest_neighbor(q, cloud).index);
  }

  if (p.mode == KeypointMode::Convex) {
    // Anchor weight w with all other logits 0: w = e^L / (e^L + N - 1).
    const double anchor_logit = std::log(kInitialAnchorWeight * static_cast<double>(n - 1) /
                                         (1.0 - kInitialAnchorWeight));
    p.keypoint_params.assign(config.k * n, 0.0);
    for (std::size_t r = 0; r < config.k; ++r) p.keypoint_params[r * n + p.anchors[r]] = anchor_logit;
  } else {
    for (const auto idx : p.anchors) {
      p.keypoint_params.insert(p.keypoint_params.end(), {cloud[idx].x, cloud[idx].y, cloud[idx].z});
    }
  }
  p.activation_logits.assign(edge_count(config.k), 0.0);
  p.plan = plan_sampling(Skeleton::from_keypoints(p.keypoints(cloud)), config.total_budget);
  p.offsets = OffsetTable::zeros(p.plan);
  p.first_moment.assign(p.parameter_count(), 0.0);
  p.second_moment.assign(p.parameter_count(), 0.0);
  return p;
}

// ---------------------------------------------------------------------------
// Fitting

SkeletonFitter::SkeletonFitter(const PointCloud& cloud, FitConfig config)
    : cloud_(cloud), config_(std::move(config)), evaluator_(cloud, config_.ccd) {
  config_.validate();
}

ObjectiveEvaluation SkeletonFitter::evaluate(const FitParams& params) const {
  if (params.cloud_size != cloud_.size() || params.k != config_.k) {
    throw_argument("parameters were initialized for a different cloud or k");
  }
  const Skeleton skeleton = params.skeleton(cloud_);
  const SubCloudSet raw = sample_edges(skeleton, params.plan);
  const SubCloudSet recon = apply_offsets(raw, params.offsets);
  const std::vector<double> a = params.activations();
  const CcdResult loss = evaluator_.evaluate(recon, a);
  const OffsetPenalty penalty = offset_penalty(params.offsets, config_.lambda_reg);

  ObjectiveEvaluation out;
  out.loss = {loss.total, loss.fidelity, loss.coverage, penalty.value};
  out.gradient.assign(params.parameter_count(), 0.0);

  const std::size_t kp_size = params.keypoint_params.size();
  const std::size_t edges = a.size();
  double* g_act = out.gradient.data() + kp_size;
  double* g_off = g_act + edges;

  // Sub-cloud points are affine in the two edge endpoints plus the offset.
  std::vector<Vec3> g_kp(params.k);
  const auto pen_grad = penalty.gradient.points();
  for (std::size_t e = 0; e < edges; ++e) {
    g_act[e] = loss.grad_activations[e] * a[e] * (1.0 - a[e]);
    const std::size_t begin = raw.edge_begin(e);
    const std::size_t count = raw.edge_size(e);
    for (std::size_t s = 0; s < count; ++s) {
      const Vec3& g = loss.grad_points[begin + s];
      const double t = sample_parameter(s, count);
      g_kp[skeleton.edges[e].u] += (1.0 - t) * g;
      g_kp[skeleton.edges[e].v] += t * g;
      const Vec3 go = g + pen_grad[begin + s];
      g_off[3 * (begin + s)] = go.x;
      g_off[3 * (begin + s) + 1] = go.y;
      g_off[3 * (begin + s) + 2] = go.z;
    }
  }

  if (params.mode == KeypointMode::Free) {
    for (std::size_t r = 0; r < params.k; ++r) {
      for (std::size_t c = 0; c < 3; ++c) out.gradient[3 * r + c] = g_kp[r][c];
    }
  } else {
    // d K_r / d S_rj = w_rj (X_j - K_r)
    const std::size_t n = params.cloud_size;
    const auto weights = softmax_rows(params.keypoint_params, params.k, n);
    for (std::size_t r = 0; r < params.k; ++r) {
      const Vec3& kr = skeleton.keypoints[r];
      for (std::size_t j = 0; j < n; ++j) {
        out.gradient[r * n + j] = weights[r * n + j] * dot(cloud_[j] - kr, g_kp[r]);
      }
    }
  }
  return out;
}

namespace {

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

std::pair<FitParams, LossBreakdown> SkeletonFitter::step(const FitParams& params) const {
  bool finite_state = all_finite(params.keypoint_params) && all_finite(params.activation_logits);
  for (const auto& b : params.offsets.points()) finite_state = finite_state && is_finite(b);
  if (!finite_state) {
    throw DivergenceError("non-finite parameters at iteration " + std::to_string(params.iteration),
                          make_report(params, {}, 0));
  }
  const ObjectiveEvaluation eval = evaluate(params);
  if (!std::isfinite(eval.loss.objective()) || !all_finite(eval.gradient)) {
    throw DivergenceError("non-finite loss at iteration " + std::to_string(params.iteration),
                          make_report(params, {}, 0));
  }

  FitParams next = params;
  const double rate = config_.rate_at(params.iteration);
  const double b1 = config_.adam_beta1;
  const double b2 = config_.adam_beta2;
  const double t = static_cast<double>(params.iteration + 1);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);

  const std::size_t kp_size = next.keypoint_params.size();
  const std::size_t act_size = next.activation_logits.size();
  auto offset_values = next.offsets.points();
  for (std::size_t i = 0; i < eval.gradient.size(); ++i) {
    const double g = eval.gradient[i];
    double& m = next.first_moment[i];
    double& v = next.second_moment[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double update = rate * (m / c1) / (std::sqrt(v / c2) + config_.adam_epsilon);
    if (i < kp_size) {
      next.keypoint_params[i] -= update;
    } else if (i < kp_size + act_size) {
      next.activation_logits[i - kp_size] -= config_.activation_rate_scale * update;
    } else {
      const std::size_t o = i - kp_size - act_size;
      offset_values[o / 3][o % 3] -= update;
    }
  }
  ++next.iteration;
  return {std::move(next), eval.loss};
}

FitReport SkeletonFitter::make_report(const FitParams& best, std::vector<LossBreakdown> history,
                                      std::size_t best_iteration) const {
  FitReport report;
  report.skeleton = best.skeleton(cloud_);
  report.activations = best.activations();
  report.plan = best.plan;
  report.subclouds = apply_offsets(sample_edges(report.skeleton, best.plan), best.offsets);
  report.params = best;
  report.best_iteration = best_iteration;
  if (!history.empty()) {
    const std::size_t window = std::max<std::size_t>(2, history.size() / 10);
    if (history.size() >= window) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = history.size() - window; i < history.size(); ++i) {
        lo = std::min(lo, history[i].objective());
        hi = std::max(hi, history[i].objective());
      }
      report.converged = hi - lo <= 1e-3 * std::max(std::abs(lo), 1e-12);
    }
  }
  report.history = std::move(history);
  return report;
}

FitReport SkeletonFitter::fit() const { return fit(init_params(cloud_, config_)); }

FitReport SkeletonFitter::fit(FitParams current) const {
  const auto started = std::chrono::steady_clock::now();
  std::vector<LossBreakdown> history;
  history.reserve(config_.iterations);
  FitParams best = current;
  double best_objective = std::numeric_limits<double>::infinity();
  std::size_t best_iteration = 0;

  for (std::size_t it = 0; it < config_.iterations; ++it) {
    std::pair<FitParams, LossBreakdown> next;
    try {
      next = step(current);
    } catch (const DivergenceError& e) {
      if (history.empty()) best = current;
      throw DivergenceError(e.what(), make_report(best, std::move(history), best_iteration));
    }
    history.push_back(next.second);
    if (next.second.objective() < best_objective) {
      best_objective = next.second.objective();
      best = current;
      best_iteration = it;
    }
    current = std::move(next.first);
  }

  FitReport report = make_report(best, std::move(history), best_iteration);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::pair<FitParams, LossBreakdown> step(const PointCloud& cloud, const FitParams& params,
                                         const FitConfig& config) {
  return SkeletonFitter(cloud, config).step(params);
}

FitReport fit(const PointCloud& cloud, const FitConfig& config) {
  return SkeletonFitter(cloud, config).fit();
}

std::vector<Vec3> extract_keypoints(const FitReport& report) { return report.skeleton.keypoints; }

}  // namespace skelfit
