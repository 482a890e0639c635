#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skelfit/geometry.hpp"

namespace skelfit {

/// Ordered, non-empty list of finite 3D points. Order matters: keypoint
/// logits index into it.
class PointCloud {
 public:
  /// Throws EmptyInput for zero points and Argument for non-finite coordinates.
  explicit PointCloud(std::vector<Vec3> points);

  std::size_t size() const noexcept { return points_.size(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Vec3> points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  Vec3 centroid() const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Vec3> points_;
};

struct BoundingBox {
  Vec3 min;
  Vec3 max;

  static BoundingBox of(std::span<const Vec3> points);
  double diagonal() const { return distance(min, max); }
  bool contains(const Vec3& p, double margin = 0.0) const;
};

struct Annotation {
  Vec3 position;
  int semantic_id = 0;
};

/// Expert keypoints with semantic labels; non-empty, labels >= 0.
class AnnotationSet {
 public:
  explicit AnnotationSet(std::vector<Annotation> keypoints);

  std::size_t size() const noexcept { return keypoints_.size(); }
  const Annotation& operator[](std::size_t i) const { return keypoints_[i]; }
  std::span<const Annotation> keypoints() const noexcept { return keypoints_; }
  std::vector<Vec3> positions() const;

 private:
  std::vector<Annotation> keypoints_;
};

// ---------------------------------------------------------------------------
// File I/O

enum class CloudFormat {
  Xyz,   // three whitespace-separated reals per line
  Ply,   // ascii PLY, vertex element only
  Text,  // numpy savetxt style: whitespace or comma delimited, '#' comments
};

/// Picks a format from the file extension (.xyz, .ply, .txt/.csv).
CloudFormat format_from_path(const std::string& path);
CloudFormat parse_format(const std::string& name);

PointCloud load_cloud(const std::string& path, CloudFormat format);
PointCloud load_cloud(const std::string& path);

/// Parses xyz text already in memory; `origin` names the source in errors.
PointCloud parse_xyz(const std::string& text, const std::string& origin = "<memory>");
PointCloud parse_ply(const std::string& text, const std::string& origin = "<memory>");

/// Shortest round-trip decimal representation; load(write(c)) == c bitwise.
std::string format_xyz(std::span<const Vec3> points);
void write_xyz(const std::string& path, std::span<const Vec3> points);
void write_ply(const std::string& path, std::span<const Vec3> points);

AnnotationSet load_annotations(const std::string& path);
AnnotationSet parse_annotations(const std::string& json_text,
                                const std::string& origin = "<memory>");

// ---------------------------------------------------------------------------
// Preprocessing

/// p_normalized = (p - center) / scale
struct NormalizeTransform {
  Vec3 center;
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - center) * (1.0 / scale); }
  Vec3 invert(const Vec3& p) const { return p * scale + center; }
  std::vector<Vec3> invert(std::span<const Vec3> points) const;
};

struct NormalizedCloud {
  PointCloud cloud;
  NormalizeTransform transform;
};

/// Centers at the centroid and scales the bounding-box diagonal to 1.
/// Throws Degenerate when every point is identical.
NormalizedCloud normalize(const PointCloud& cloud);

struct NearestResult {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Exhaustive scan; ties go to the lowest index.
NearestResult nearest_neighbor(const Vec3& query, std::span<const Vec3> target);
NearestResult nearest_neighbor(const Vec3& query, const PointCloud& target);

/// Greedy max-min subset starting from `start`; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sample_from(const PointCloud& cloud, std::size_t k,
                                                    std::size_t start);
/// Seeded start: the extreme point of the cloud along a direction drawn from
/// `seed`, so the same seed picks geometrically corresponding starts on
/// perturbed copies of a shape.
std::size_t fps_start_index(const PointCloud& cloud, std::uint64_t seed);
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::uint64_t seed);

/// Uniform subset without replacement of round(N * ratio) points, kept in
/// original order.
PointCloud subsample(const PointCloud& cloud, double ratio, std::uint64_t seed);

PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma, std::uint64_t seed);

/// `count` points uniformly distributed in `box`.
std::vector<Vec3> sample_box_uniform(const BoundingBox& box, std::size_t count,
                                     std::uint64_t seed);

}  // namespace skelfit
