/*
 * skelfit C API.
 *
 * Every entry point is prefixed with the ABI version (skelfit_v1_). Functions
 * report failure through their return status and, when `err` is non-NULL, a
 * caller-owned skelfit_error with a message. No function aborts the host
 * process and the library keeps no global state, so calls are reentrant.
 *
 * Ownership: objects returned through `**out` handles and `char**` strings are
 * owned by the caller and released with the matching *_free function.
 * Pointers returned by accessors (e.g. skelfit_v1_cloud_data) are borrowed and
 * stay valid until the owning handle is freed. Caller buffers are never
 * retained past a call.
 */
#ifndef SKELFIT_SKELFIT_H
#define SKELFIT_SKELFIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(SKELFIT_BUILDING_LIBRARY)
#define SKELFIT_API __attribute__((visibility("default")))
#else
#define SKELFIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

#define SKELFIT_ABI_VERSION 1

typedef enum skelfit_status {
  SKELFIT_OK = 0,
  SKELFIT_ERROR_ARGUMENT = 1,
  SKELFIT_ERROR_SHAPE = 2,
  SKELFIT_ERROR_PARSE = 3,
  SKELFIT_ERROR_EMPTY_INPUT = 4,
  SKELFIT_ERROR_IO = 5,
  SKELFIT_ERROR_DEGENERATE = 6,
  SKELFIT_ERROR_DIVERGENCE = 7,
  SKELFIT_ERROR_INTERNAL = 99
} skelfit_status;

typedef struct skelfit_error {
  int code;         /* a skelfit_status value */
  size_t line;      /* 1-based line for parse errors, else 0 */
  char message[512];
} skelfit_error;

typedef enum skelfit_match_rule {
  SKELFIT_MATCH_GREEDY = 0,
  SKELFIT_MATCH_HUNGARIAN = 1
} skelfit_match_rule;

typedef struct skelfit_cloud skelfit_cloud;
typedef struct skelfit_annotations skelfit_annotations;
typedef struct skelfit_fit skelfit_fit;
typedef struct skelfit_skeleton skelfit_skeleton;
typedef struct skelfit_samples skelfit_samples;

SKELFIT_API const char* skelfit_v1_version(void);
SKELFIT_API const char* skelfit_v1_status_name(int status);
SKELFIT_API void skelfit_v1_string_free(char* s);

/* ---- point clouds ------------------------------------------------------- */

/* format: "xyz", "ply", "txt", or NULL to pick from the file extension. */
SKELFIT_API int skelfit_v1_cloud_load(const char* path, const char* format, skelfit_cloud** out,
                                      skelfit_error* err);
/* xyz: n rows of (x, y, z). */
SKELFIT_API int skelfit_v1_cloud_from_xyz(const double* xyz, size_t n, skelfit_cloud** out,
                                          skelfit_error* err);
SKELFIT_API void skelfit_v1_cloud_free(skelfit_cloud* cloud);
SKELFIT_API size_t skelfit_v1_cloud_size(const skelfit_cloud* cloud);
SKELFIT_API const double* skelfit_v1_cloud_data(const skelfit_cloud* cloud);
/* format: "xyz" or "ply"; NULL picks from the extension. */
SKELFIT_API int skelfit_v1_cloud_write(const skelfit_cloud* cloud, const char* path,
                                       const char* format, skelfit_error* err);
SKELFIT_API int skelfit_v1_cloud_bounding_box(const skelfit_cloud* cloud, double min[3],
                                              double max[3], double* diagonal, skelfit_error* err);
/* normalized = (p - center) / scale */
SKELFIT_API int skelfit_v1_cloud_normalize(const skelfit_cloud* cloud, skelfit_cloud** out,
                                           double center[3], double* scale, skelfit_error* err);
SKELFIT_API int skelfit_v1_cloud_add_noise(const skelfit_cloud* cloud, double sigma, uint64_t seed,
                                           skelfit_cloud** out, skelfit_error* err);
SKELFIT_API int skelfit_v1_cloud_subsample(const skelfit_cloud* cloud, double ratio, uint64_t seed,
                                           skelfit_cloud** out, skelfit_error* err);
/* indices: caller buffer of k entries. */
SKELFIT_API int skelfit_v1_cloud_farthest_point_sample(const skelfit_cloud* cloud, size_t k,
                                                       uint64_t seed, size_t* indices,
                                                       skelfit_error* err);
SKELFIT_API int skelfit_v1_cloud_nearest(const skelfit_cloud* cloud, const double query[3],
                                         size_t* index, double* distance, skelfit_error* err);

/* ---- fitting ------------------------------------------------------------ */

/* config_json: flat FitConfig document. On divergence the status is
 * SKELFIT_ERROR_DIVERGENCE and *out still receives the partial result. */
SKELFIT_API int skelfit_v1_fit_run(const skelfit_cloud* cloud, const char* config_json,
                                   skelfit_fit** out, skelfit_error* err);
SKELFIT_API void skelfit_v1_fit_free(skelfit_fit* fit);
SKELFIT_API size_t skelfit_v1_fit_keypoint_count(const skelfit_fit* fit);
SKELFIT_API const double* skelfit_v1_fit_keypoints(const skelfit_fit* fit);
SKELFIT_API size_t skelfit_v1_fit_edge_count(const skelfit_fit* fit);
SKELFIT_API const double* skelfit_v1_fit_activations(const skelfit_fit* fit);
/* rows of (L, L_f, L_c, penalty) */
SKELFIT_API size_t skelfit_v1_fit_history_length(const skelfit_fit* fit);
SKELFIT_API const double* skelfit_v1_fit_history(const skelfit_fit* fit);
SKELFIT_API size_t skelfit_v1_fit_best_iteration(const skelfit_fit* fit);
SKELFIT_API int skelfit_v1_fit_converged(const skelfit_fit* fit);
SKELFIT_API double skelfit_v1_fit_wall_time(const skelfit_fit* fit);
/* Refined sub-clouds, flat; offsets has edge_count + 1 entries. */
SKELFIT_API size_t skelfit_v1_fit_reconstruction_size(const skelfit_fit* fit);
SKELFIT_API const double* skelfit_v1_fit_reconstruction(const skelfit_fit* fit);
SKELFIT_API const size_t* skelfit_v1_fit_reconstruction_offsets(const skelfit_fit* fit);
/* JSON documents with coordinates mapped back through p * scale + center.
 * Pass center = NULL, scale = 1 for the fitting frame. */
SKELFIT_API int skelfit_v1_fit_report_json(const skelfit_fit* fit, const double center[3],
                                           double scale, char** out, skelfit_error* err);
SKELFIT_API int skelfit_v1_fit_skeleton_json(const skelfit_fit* fit, const double center[3],
                                             double scale, char** out, skelfit_error* err);

/* ---- skeleton documents ------------------------------------------------- */

SKELFIT_API int skelfit_v1_skeleton_load(const char* path, skelfit_skeleton** out,
                                         skelfit_error* err);
SKELFIT_API void skelfit_v1_skeleton_free(skelfit_skeleton* skeleton);
SKELFIT_API size_t skelfit_v1_skeleton_keypoint_count(const skelfit_skeleton* skeleton);
SKELFIT_API const double* skelfit_v1_skeleton_keypoints(const skelfit_skeleton* skeleton);

/* ---- metrics ------------------------------------------------------------ */

SKELFIT_API int skelfit_v1_annotations_load(const char* path, skelfit_annotations** out,
                                            skelfit_error* err);
SKELFIT_API int skelfit_v1_annotations_from(const double* xyz, const int* semantic_ids, size_t n,
                                            skelfit_annotations** out, skelfit_error* err);
SKELFIT_API void skelfit_v1_annotations_free(skelfit_annotations* annotations);
SKELFIT_API size_t skelfit_v1_annotations_size(const skelfit_annotations* annotations);

/* counts (nullable): TP, FP, FN. */
SKELFIT_API int skelfit_v1_miou(const double* predicted, size_t n_predicted,
                                const skelfit_annotations* annotations, double threshold, int rule,
                                size_t counts[3], double* iou, skelfit_error* err);
/* result: (prediction->annotation accuracy, annotation->prediction accuracy, DAS). */
SKELFIT_API int skelfit_v1_das(const double* pred_ref, size_t n_ref,
                               const skelfit_annotations* anno_ref, const double* pred_eval,
                               size_t n_eval, const skelfit_annotations* anno_eval,
                               double result[3], skelfit_error* err);
SKELFIT_API int skelfit_v1_repeatability(const double* original, size_t n_original,
                                         const double* perturbed, size_t n_perturbed,
                                         double model_size, double ratio, double* score,
                                         skelfit_error* err);
/* Samples the skeleton at its stored plan, draws box_samples uniform points
 * in the cloud's bounding box, and returns the histogram JSON. */
SKELFIT_API int skelfit_v1_distance_histogram(const skelfit_cloud* cloud,
                                              const skelfit_skeleton* skeleton,
                                              size_t box_samples, size_t bins, uint64_t seed,
                                              char** out_json, skelfit_error* err);

/* ---- loss kernel for external training loops --------------------------- */

/* input: n_input x 3. points: n_points x 3 sub-cloud points, edge e owning
 * rows [offsets[e], offsets[e+1]); offsets has n_edges + 1 entries.
 * activations: n_activations values in [0, 1], n_activations == n_edges.
 * losses: (L, L_f, L_c). grad_points (n_points x 3) and grad_activations
 * (n_activations) are caller buffers and may be NULL. */
SKELFIT_API int skelfit_v1_ccd_forward_backward(const double* input, size_t n_input,
                                                const double* points, size_t n_points,
                                                const size_t* offsets, size_t n_edges,
                                                const double* activations, size_t n_activations,
                                                double gamma, double lambda_f, double lambda_c,
                                                double losses[3], double* grad_points,
                                                double* grad_activations, skelfit_error* err);

/* Uniform midpoint samples on every edge of the complete graph over k
 * keypoints, with counts proportional to edge length. */
SKELFIT_API int skelfit_v1_sample_skeleton(const double* keypoints, size_t k, size_t total_budget,
                                           skelfit_samples** out, skelfit_error* err);
SKELFIT_API void skelfit_v1_samples_free(skelfit_samples* samples);
SKELFIT_API size_t skelfit_v1_samples_point_count(const skelfit_samples* samples);
SKELFIT_API const double* skelfit_v1_samples_points(const skelfit_samples* samples);
SKELFIT_API size_t skelfit_v1_samples_edge_count(const skelfit_samples* samples);
SKELFIT_API const size_t* skelfit_v1_samples_offsets(const skelfit_samples* samples);

#ifdef __cplusplus
}
#endif

#endif /* SKELFIT_SKELFIT_H */
