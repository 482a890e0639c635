#include "skelfit/skelfit.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skelfit/ccd.hpp"
#include "skelfit/error.hpp"
#include "skelfit/metrics.hpp"
#include "skelfit/optimizer.hpp"
#include "skelfit/pointcloud.hpp"
#include "skelfit/serialization.hpp"
#include "skelfit/skeleton.hpp"

using namespace skelfit;

namespace {

std::vector<double> flatten(std::span<const Vec3> points) {
  std::vector<double> out;
  out.reserve(points.size() * 3);
  for (const auto& p : points) {
    out.push_back(p.x);
    out.push_back(p.y);
    out.push_back(p.z);
  }
  return out;
}

std::vector<Vec3> unflatten(const double* xyz, std::size_t n) {
  std::vector<Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
  return out;
}

// Caller buffers are bad shape rather than bad value: wrong length, NULL with
// a nonzero count, inconsistent offsets.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

void set_error(skelfit_error* err, int code, const char* message, std::size_t line = 0) {
  if (err == nullptr) return;
  err->code = code;
  err->line = line;
  std::snprintf(err->message, sizeof err->message, "%s", message);
}

int status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Argument: return SKELFIT_ERROR_ARGUMENT;
    case ErrorKind::Parse: return SKELFIT_ERROR_PARSE;
    case ErrorKind::EmptyInput: return SKELFIT_ERROR_EMPTY_INPUT;
    case ErrorKind::Io: return SKELFIT_ERROR_IO;
    case ErrorKind::Degenerate: return SKELFIT_ERROR_DEGENERATE;
    case ErrorKind::Divergence: return SKELFIT_ERROR_DIVERGENCE;
  }
  return SKELFIT_ERROR_INTERNAL;
}

// Runs `body` and converts every exception into a status code. Nothing
// propagates across the C boundary.
template <typename F>
int guarded(skelfit_error* err, F&& body) {
  try {
    body();
    set_error(err, SKELFIT_OK, "");
    return SKELFIT_OK;
  } catch (const ShapeError& e) {
    set_error(err, SKELFIT_ERROR_SHAPE, e.what());
    return SKELFIT_ERROR_SHAPE;
  } catch (const ParseError& e) {
    set_error(err, SKELFIT_ERROR_PARSE, e.what(), e.line());
    return SKELFIT_ERROR_PARSE;
  } catch (const Error& e) {
    const int code = status_of(e.kind());
    set_error(err, code, e.what());
    return code;
  } catch (const std::bad_alloc&) {
    set_error(err, SKELFIT_ERROR_INTERNAL, "out of memory");
    return SKELFIT_ERROR_INTERNAL;
  } catch (const std::exception& e) {
    set_error(err, SKELFIT_ERROR_INTERNAL, e.what());
    return SKELFIT_ERROR_INTERNAL;
  } catch (...) {
    set_error(err, SKELFIT_ERROR_INTERNAL, "unknown failure");
    return SKELFIT_ERROR_INTERNAL;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

NormalizeTransform frame_of(const double* center, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw_argument("frame scale must be positive");
  NormalizeTransform t;
  if (center != nullptr) t.center = {center[0], center[1], center[2]};
  t.scale = scale;
  return t;
}

}  // namespace

struct skelfit_cloud {
  explicit skelfit_cloud(PointCloud c) : cloud(std::move(c)), flat(flatten(cloud.points())) {}
  PointCloud cloud;
  std::vector<double> flat;
};

struct skelfit_annotations {
  AnnotationSet set;
};

struct skelfit_fit {
  explicit skelfit_fit(FitReport r) : report(std::move(r)) {
    keypoints = flatten(report.skeleton.keypoints);
    reconstruction = flatten(report.subclouds.points());
    const auto off = report.subclouds.offsets();
    offsets.assign(off.begin(), off.end());
    for (const auto& h : report.history) {
      history.insert(history.end(), {h.total, h.fidelity, h.coverage, h.penalty});
    }
  }
  FitReport report;
  std::vector<double> keypoints;
  std::vector<double> reconstruction;
  std::vector<std::size_t> offsets;
  std::vector<double> history;
};

struct skelfit_skeleton {
  SkeletonDocument doc;
  std::vector<double> keypoints;
};

struct skelfit_samples {
  std::vector<double> points;
  std::vector<std::size_t> offsets;
};

extern "C" {

const char* skelfit_v1_version(void) { return SKELFIT_VERSION_STRING; }

const char* skelfit_v1_status_name(int status) {
  switch (status) {
    case SKELFIT_OK: return "ok";
    case SKELFIT_ERROR_ARGUMENT: return "argument";
    case SKELFIT_ERROR_SHAPE: return "shape";
    case SKELFIT_ERROR_PARSE: return "parse";
    case SKELFIT_ERROR_EMPTY_INPUT: return "empty_input";
    case SKELFIT_ERROR_IO: return "io";
    case SKELFIT_ERROR_DEGENERATE: return "degenerate";
    case SKELFIT_ERROR_DIVERGENCE: return "divergence";
    case SKELFIT_ERROR_INTERNAL: return "internal";
    default: return "unknown";
  }
}

void skelfit_v1_string_free(char* s) { std::free(s); }

// ---- point clouds ----------------------------------------------------------

int skelfit_v1_cloud_load(const char* path, const char* format, skelfit_cloud** out,
                          skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(path != nullptr && out != nullptr, "path and out must be non-NULL");
    *out = nullptr;
    auto cloud = format == nullptr ? load_cloud(path) : load_cloud(path, parse_format(format));
    *out = new skelfit_cloud(std::move(cloud));
  });
}

int skelfit_v1_cloud_from_xyz(const double* xyz, size_t n, skelfit_cloud** out,
                              skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(out != nullptr, "out must be non-NULL");
    *out = nullptr;
    require_shape(xyz != nullptr || n == 0, "xyz is NULL");
    *out = new skelfit_cloud(PointCloud(unflatten(xyz, n)));
  });
}

void skelfit_v1_cloud_free(skelfit_cloud* cloud) { delete cloud; }

size_t skelfit_v1_cloud_size(const skelfit_cloud* cloud) {
  return cloud == nullptr ? 0 : cloud->cloud.size();
}

const double* skelfit_v1_cloud_data(const skelfit_cloud* cloud) {
  return cloud == nullptr ? nullptr : cloud->flat.data();
}

int skelfit_v1_cloud_write(const skelfit_cloud* cloud, const char* path, const char* format,
                           skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr && path != nullptr, "cloud and path must be non-NULL");
    const auto fmt = format == nullptr ? format_from_path(path) : parse_format(format);
    if (fmt == CloudFormat::Ply) {
      write_ply(path, cloud->cloud.points());
    } else {
      write_xyz(path, cloud->cloud.points());
    }
  });
}

int skelfit_v1_cloud_bounding_box(const skelfit_cloud* cloud, double min[3], double max[3],
                                  double* diagonal, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr, "cloud is NULL");
    const auto box = BoundingBox::of(cloud->cloud.points());
    for (int a = 0; a < 3; ++a) {
      if (min != nullptr) min[a] = box.min[a];
      if (max != nullptr) max[a] = box.max[a];
    }
    if (diagonal != nullptr) *diagonal = box.diagonal();
  });
}

int skelfit_v1_cloud_normalize(const skelfit_cloud* cloud, skelfit_cloud** out, double center[3],
                               double* scale, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr && out != nullptr, "cloud and out must be non-NULL");
    *out = nullptr;
    auto n = normalize(cloud->cloud);
    if (center != nullptr) {
      for (int a = 0; a < 3; ++a) center[a] = n.transform.center[a];
    }
    if (scale != nullptr) *scale = n.transform.scale;
    *out = new skelfit_cloud(std::move(n.cloud));
  });
}

int skelfit_v1_cloud_add_noise(const skelfit_cloud* cloud, double sigma, uint64_t seed,
                               skelfit_cloud** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr && out != nullptr, "cloud and out must be non-NULL");
    *out = nullptr;
    *out = new skelfit_cloud(add_gaussian_noise(cloud->cloud, sigma, seed));
  });
}

int skelfit_v1_cloud_subsample(const skelfit_cloud* cloud, double ratio, uint64_t seed,
                               skelfit_cloud** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr && out != nullptr, "cloud and out must be non-NULL");
    *out = nullptr;
    *out = new skelfit_cloud(subsample(cloud->cloud, ratio, seed));
  });
}

int skelfit_v1_cloud_farthest_point_sample(const skelfit_cloud* cloud, size_t k, uint64_t seed,
                                           size_t* indices, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr, "cloud is NULL");
    require_shape(indices != nullptr || k == 0, "indices is NULL");
    const auto picked = farthest_point_sample(cloud->cloud, k, seed);
    std::copy(picked.begin(), picked.end(), indices);
  });
}

int skelfit_v1_cloud_nearest(const skelfit_cloud* cloud, const double query[3], size_t* index,
                             double* distance, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr && query != nullptr, "cloud and query must be non-NULL");
    const auto r = nearest_neighbor({query[0], query[1], query[2]}, cloud->cloud);
    if (index != nullptr) *index = r.index;
    if (distance != nullptr) *distance = r.distance;
  });
}

// ---- fitting ---------------------------------------------------------------

int skelfit_v1_fit_run(const skelfit_cloud* cloud, const char* config_json, skelfit_fit** out,
                       skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr && config_json != nullptr && out != nullptr,
                  "cloud, config_json and out must be non-NULL");
    *out = nullptr;
    const auto config = fit_config_from_json(config_json);
    try {
      *out = new skelfit_fit(fit(cloud->cloud, config));
    } catch (const DivergenceError& e) {
      *out = new skelfit_fit(e.partial());
      throw;
    }
  });
}

void skelfit_v1_fit_free(skelfit_fit* fit) { delete fit; }

size_t skelfit_v1_fit_keypoint_count(const skelfit_fit* fit) {
  return fit == nullptr ? 0 : fit->report.skeleton.keypoints.size();
}

const double* skelfit_v1_fit_keypoints(const skelfit_fit* fit) {
  return fit == nullptr ? nullptr : fit->keypoints.data();
}

size_t skelfit_v1_fit_edge_count(const skelfit_fit* fit) {
  return fit == nullptr ? 0 : fit->report.activations.size();
}

const double* skelfit_v1_fit_activations(const skelfit_fit* fit) {
  return fit == nullptr ? nullptr : fit->report.activations.data();
}

size_t skelfit_v1_fit_history_length(const skelfit_fit* fit) {
  return fit == nullptr ? 0 : fit->report.history.size();
}

const double* skelfit_v1_fit_history(const skelfit_fit* fit) {
  return fit == nullptr ? nullptr : fit->history.data();
}

size_t skelfit_v1_fit_best_iteration(const skelfit_fit* fit) {
  return fit == nullptr ? 0 : fit->report.best_iteration;
}

int skelfit_v1_fit_converged(const skelfit_fit* fit) {
  return fit != nullptr && fit->report.converged ? 1 : 0;
}

double skelfit_v1_fit_wall_time(const skelfit_fit* fit) {
  return fit == nullptr ? 0.0 : fit->report.wall_time_seconds;
}

size_t skelfit_v1_fit_reconstruction_size(const skelfit_fit* fit) {
  return fit == nullptr ? 0 : fit->report.subclouds.size();
}

const double* skelfit_v1_fit_reconstruction(const skelfit_fit* fit) {
  return fit == nullptr ? nullptr : fit->reconstruction.data();
}

const size_t* skelfit_v1_fit_reconstruction_offsets(const skelfit_fit* fit) {
  return fit == nullptr ? nullptr : fit->offsets.data();
}

int skelfit_v1_fit_report_json(const skelfit_fit* fit, const double center[3], double scale,
                               char** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(fit != nullptr && out != nullptr, "fit and out must be non-NULL");
    *out = copy_string(fit_report_to_json(fit->report, frame_of(center, scale)));
  });
}

int skelfit_v1_fit_skeleton_json(const skelfit_fit* fit, const double center[3], double scale,
                                 char** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(fit != nullptr && out != nullptr, "fit and out must be non-NULL");
    const auto frame = frame_of(center, scale);
    const auto& r = fit->report;
    SkeletonDocument doc{frame.invert(r.skeleton.keypoints), r.skeleton.edges, r.activations,
                         r.plan};
    *out = copy_string(skeleton_to_json(doc));
  });
}

// ---- skeleton documents ----------------------------------------------------

int skelfit_v1_skeleton_load(const char* path, skelfit_skeleton** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(path != nullptr && out != nullptr, "path and out must be non-NULL");
    *out = nullptr;
    auto doc = load_skeleton(path);
    auto flat = flatten(doc.keypoints);
    *out = new skelfit_skeleton{std::move(doc), std::move(flat)};
  });
}

void skelfit_v1_skeleton_free(skelfit_skeleton* skeleton) { delete skeleton; }

size_t skelfit_v1_skeleton_keypoint_count(const skelfit_skeleton* skeleton) {
  return skeleton == nullptr ? 0 : skeleton->doc.keypoints.size();
}

const double* skelfit_v1_skeleton_keypoints(const skelfit_skeleton* skeleton) {
  return skeleton == nullptr ? nullptr : skeleton->keypoints.data();
}

// ---- metrics ---------------------------------------------------------------

int skelfit_v1_annotations_load(const char* path, skelfit_annotations** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(path != nullptr && out != nullptr, "path and out must be non-NULL");
    *out = nullptr;
    *out = new skelfit_annotations{load_annotations(path)};
  });
}

int skelfit_v1_annotations_from(const double* xyz, const int* semantic_ids, size_t n,
                                skelfit_annotations** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(out != nullptr, "out must be non-NULL");
    *out = nullptr;
    require_shape((xyz != nullptr && semantic_ids != nullptr) || n == 0,
                  "xyz and semantic_ids must be non-NULL");
    std::vector<Annotation> keypoints(n);
    for (std::size_t i = 0; i < n; ++i) {
      keypoints[i] = {{xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]}, semantic_ids[i]};
    }
    *out = new skelfit_annotations{AnnotationSet(std::move(keypoints))};
  });
}

void skelfit_v1_annotations_free(skelfit_annotations* annotations) { delete annotations; }

size_t skelfit_v1_annotations_size(const skelfit_annotations* annotations) {
  return annotations == nullptr ? 0 : annotations->set.size();
}

int skelfit_v1_miou(const double* predicted, size_t n_predicted,
                    const skelfit_annotations* annotations, double threshold, int rule,
                    size_t counts[3], double* iou, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(annotations != nullptr && iou != nullptr, "annotations and iou must be non-NULL");
    require_shape(predicted != nullptr || n_predicted == 0, "predicted is NULL");
    if (rule != SKELFIT_MATCH_GREEDY && rule != SKELFIT_MATCH_HUNGARIAN) {
      throw_argument("unknown match rule " + std::to_string(rule));
    }
    MatchConfig config{threshold,
                       rule == SKELFIT_MATCH_GREEDY ? MatchRule::Greedy : MatchRule::Hungarian};
    const auto pred = unflatten(predicted, n_predicted);
    const auto m = match_keypoints(pred, annotations->set, config);
    if (counts != nullptr) {
      counts[0] = m.true_positives;
      counts[1] = m.false_positives;
      counts[2] = m.false_negatives;
    }
    *iou = m.iou();
  });
}

int skelfit_v1_das(const double* pred_ref, size_t n_ref, const skelfit_annotations* anno_ref,
                   const double* pred_eval, size_t n_eval, const skelfit_annotations* anno_eval,
                   double result[3], skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(anno_ref != nullptr && anno_eval != nullptr && result != nullptr,
                  "annotations and result must be non-NULL");
    require_shape((pred_ref != nullptr || n_ref == 0) && (pred_eval != nullptr || n_eval == 0),
                  "prediction buffer is NULL");
    require_shape(n_ref == n_eval, "prediction lists differ in length");
    const auto r = dual_alignment(unflatten(pred_ref, n_ref), anno_ref->set,
                                  unflatten(pred_eval, n_eval), anno_eval->set);
    result[0] = r.prediction_to_annotation;
    result[1] = r.annotation_to_prediction;
    result[2] = r.score;
  });
}

int skelfit_v1_repeatability(const double* original, size_t n_original, const double* perturbed,
                             size_t n_perturbed, double model_size, double ratio, double* score,
                             skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(score != nullptr, "score is NULL");
    require_shape((original != nullptr || n_original == 0) &&
                      (perturbed != nullptr || n_perturbed == 0),
                  "keypoint buffer is NULL");
    require_shape(n_original == n_perturbed, "keypoint lists differ in length");
    *score = repeatability(unflatten(original, n_original), unflatten(perturbed, n_perturbed),
                           model_size, ratio);
  });
}

int skelfit_v1_distance_histogram(const skelfit_cloud* cloud, const skelfit_skeleton* skeleton,
                                  size_t box_samples, size_t bins, uint64_t seed, char** out_json,
                                  skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(cloud != nullptr && skeleton != nullptr && out_json != nullptr,
                  "cloud, skeleton and out_json must be non-NULL");
    if (box_samples == 0) throw_argument("box_samples must be positive");
    const auto& doc = skeleton->doc;
    const auto samples = sample_edges(Skeleton::from_keypoints(doc.keypoints), doc.plan);
    const auto box =
        sample_box_uniform(BoundingBox::of(cloud->cloud.points()), box_samples, seed);
    const auto h =
        skeleton_distance_histogram(cloud->cloud, samples.points(), doc.keypoints, box, bins);
    *out_json = copy_string(histogram_to_json(h));
  });
}

// ---- loss kernel -----------------------------------------------------------

int skelfit_v1_ccd_forward_backward(const double* input, size_t n_input, const double* points,
                                    size_t n_points, const size_t* offsets, size_t n_edges,
                                    const double* activations, size_t n_activations, double gamma,
                                    double lambda_f, double lambda_c, double losses[3],
                                    double* grad_points, double* grad_activations,
                                    skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(losses != nullptr, "losses is NULL");
    require_shape(n_input > 0 && input != nullptr, "input buffer is empty");
    require_shape(n_edges > 0 && offsets != nullptr, "offsets buffer is empty");
    require_shape(n_activations == n_edges && activations != nullptr,
                  "activation count differs from the edge count");
    require_shape(points != nullptr || n_points == 0, "points is NULL");
    require_shape(offsets[0] == 0 && offsets[n_edges] == n_points,
                  "offsets must start at 0 and end at n_points");
    for (std::size_t e = 0; e < n_edges; ++e) {
      require_shape(offsets[e] <= offsets[e + 1], "offsets must be non-decreasing");
    }
    CcdConfig config;
    config.gamma = gamma;
    config.lambda_f = lambda_f;
    config.lambda_c = lambda_c;
    config.validate();
    const PointCloud cloud(unflatten(input, n_input));
    const SubCloudSet sub(unflatten(points, n_points),
                          std::vector<std::size_t>(offsets, offsets + n_edges + 1));
    const std::span<const double> a(activations, n_activations);
    const auto r = ccd(cloud, sub, a, config);
    losses[0] = r.total;
    losses[1] = r.fidelity;
    losses[2] = r.coverage;
    if (grad_points != nullptr) {
      for (std::size_t i = 0; i < n_points; ++i) {
        for (int c = 0; c < 3; ++c) grad_points[3 * i + c] = r.grad_points[i][c];
      }
    }
    if (grad_activations != nullptr) {
      std::copy(r.grad_activations.begin(), r.grad_activations.end(), grad_activations);
    }
  });
}

int skelfit_v1_sample_skeleton(const double* keypoints, size_t k, size_t total_budget,
                               skelfit_samples** out, skelfit_error* err) {
  return guarded(err, [&] {
    require_shape(out != nullptr, "out is NULL");
    *out = nullptr;
    require_shape(keypoints != nullptr || k == 0, "keypoints is NULL");
    const auto skeleton = Skeleton::from_keypoints(unflatten(keypoints, k));
    for (const auto& p : skeleton.keypoints) {
      if (!is_finite(p)) throw_argument("keypoints must be finite");
    }
    const auto sub = sample_edges(skeleton, plan_sampling(skeleton, total_budget));
    const auto off = sub.offsets();
    *out = new skelfit_samples{flatten(sub.points()), {off.begin(), off.end()}};
  });
}

void skelfit_v1_samples_free(skelfit_samples* samples) { delete samples; }

size_t skelfit_v1_samples_point_count(const skelfit_samples* samples) {
  return samples == nullptr ? 0 : samples->points.size() / 3;
}

const double* skelfit_v1_samples_points(const skelfit_samples* samples) {
  return samples == nullptr ? nullptr : samples->points.data();
}

size_t skelfit_v1_samples_edge_count(const skelfit_samples* samples) {
  return samples == nullptr ? 0 : samples->offsets.size() - 1;
}

const size_t* skelfit_v1_samples_offsets(const skelfit_samples* samples) {
  return samples == nullptr ? nullptr : samples->offsets.data();
}

}  // extern "C"
