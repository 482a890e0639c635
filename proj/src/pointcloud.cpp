#include "skelfit/pointcloud.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "skelfit/error.hpp"
#include "skelfit/random.hpp"

namespace skelfit {

// ---------------------------------------------------------------------------
// Types

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw Error(ErrorKind::EmptyInput, "point cloud has no points");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!is_finite(points_[i])) {
      throw_argument("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

Vec3 PointCloud::centroid() const {
  Vec3 sum;
  for (const auto& p : points_) sum += p;
  return sum * (1.0 / static_cast<double>(points_.size()));
}

BoundingBox BoundingBox::of(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorKind::EmptyInput, "bounding box of zero points");
  BoundingBox box{points.front(), points.front()};
  for (const auto& p : points) {
    for (std::size_t a = 0; a < 3; ++a) {
      box.min[a] = std::min(box.min[a], p[a]);
      box.max[a] = std::max(box.max[a], p[a]);
    }
  }
  return box;
}

bool BoundingBox::contains(const Vec3& p, double margin) const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (p[a] < min[a] - margin || p[a] > max[a] + margin) return false;
  }
  return true;
}

AnnotationSet::AnnotationSet(std::vector<Annotation> keypoints) : keypoints_(std::move(keypoints)) {
  if (keypoints_.empty()) throw Error(ErrorKind::EmptyInput, "annotation set is empty");
  for (std::size_t i = 0; i < keypoints_.size(); ++i) {
    if (keypoints_[i].semantic_id < 0) {
      throw_argument("annotation " + std::to_string(i) + " has a negative semantic id");
    }
    if (!is_finite(keypoints_[i].position)) {
      throw_argument("annotation " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

std::vector<Vec3> AnnotationSet::positions() const {
  std::vector<Vec3> out;
  out.reserve(keypoints_.size());
  for (const auto& a : keypoints_) out.push_back(a.position);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing helpers

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << contents;
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path + "'");
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

bool parse_real(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && end == token.data() + token.size() && std::isfinite(out);
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++line_no;
    if (!fn(std::string_view(text).substr(pos, nl - pos), line_no)) return;
    if (nl == text.size()) break;
    pos = nl + 1;
  }
}

Vec3 parse_xyz_tokens(const std::vector<std::string_view>& tokens, const std::string& origin,
                      std::size_t line_no) {
  if (tokens.size() != 3) {
    throw ParseError(origin, line_no,
                     "expected 3 coordinates, found " + std::to_string(tokens.size()));
  }
  Vec3 p;
  for (std::size_t a = 0; a < 3; ++a) {
    if (!parse_real(tokens[a], p[a])) {
      throw ParseError(origin, line_no, "invalid coordinate '" + std::string(tokens[a]) + "'");
    }
  }
  return p;
}

PointCloud finish(std::vector<Vec3> points, const std::string& origin) {
  if (points.empty()) throw Error(ErrorKind::EmptyInput, origin + ": no points");
  return PointCloud(std::move(points));
}

PointCloud parse_text(const std::string& text, const std::string& origin) {
  std::vector<Vec3> points;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    std::string cleaned(line.substr(0, line.find('#')));
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    const auto tokens = split_tokens(cleaned);
    if (!tokens.empty()) points.push_back(parse_xyz_tokens(tokens, origin, line_no));
    return true;
  });
  return finish(std::move(points), origin);
}

}  // namespace

// ---------------------------------------------------------------------------
// Formats

CloudFormat parse_format(const std::string& name) {
  if (name == "xyz") return CloudFormat::Xyz;
  if (name == "ply") return CloudFormat::Ply;
  if (name == "txt" || name == "text" || name == "npy-free-text") return CloudFormat::Text;
  throw_argument("unknown cloud format '" + name + "'");
}

CloudFormat format_from_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == "ply") return CloudFormat::Ply;
  if (ext == "txt" || ext == "csv") return CloudFormat::Text;
  return CloudFormat::Xyz;
}

PointCloud parse_xyz(const std::string& text, const std::string& origin) {
  std::vector<Vec3> points;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto tokens = split_tokens(line);
    if (!tokens.empty()) points.push_back(parse_xyz_tokens(tokens, origin, line_no));
    return true;
  });
  return finish(std::move(points), origin);
}

PointCloud parse_ply(const std::string& text, const std::string& origin) {
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
    bool has_list = false;
  };
  std::vector<Element> elements;
  std::size_t line_no = 0;
  std::size_t body_start = std::string::npos;
  bool ascii = false;

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++line_no;
    const auto tokens = split_tokens(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    if (line_no == 1) {
      if (tokens.size() != 1 || tokens[0] != "ply") throw ParseError(origin, 1, "missing 'ply' magic");
      continue;
    }
    if (tokens.empty() || tokens[0] == "comment" || tokens[0] == "obj_info") continue;
    if (tokens[0] == "format") {
      if (tokens.size() < 2) throw ParseError(origin, line_no, "incomplete format line");
      if (tokens[1] != "ascii") {
        throw ParseError(origin, line_no, "unsupported PLY format '" + std::string(tokens[1]) + "'");
      }
      ascii = true;
    } else if (tokens[0] == "element") {
      std::size_t count = 0;
      if (tokens.size() != 3 ||
          std::from_chars(tokens[2].data(), tokens[2].data() + tokens[2].size(), count).ec !=
              std::errc()) {
        throw ParseError(origin, line_no, "malformed element line");
      }
      elements.push_back({std::string(tokens[1]), count, {}, false});
    } else if (tokens[0] == "property") {
      if (elements.empty()) throw ParseError(origin, line_no, "property before element");
      if (tokens.size() >= 2 && tokens[1] == "list") {
        elements.back().has_list = true;
        elements.back().properties.emplace_back(tokens.back());
      } else if (tokens.size() == 3) {
        elements.back().properties.emplace_back(tokens[2]);
      } else {
        throw ParseError(origin, line_no, "malformed property line");
      }
    } else if (tokens[0] == "end_header") {
      body_start = pos;
      break;
    } else {
      throw ParseError(origin, line_no, "unexpected header keyword '" + std::string(tokens[0]) + "'");
    }
  }
  if (body_start == std::string::npos) throw ParseError(origin, 0, "missing end_header");
  if (!ascii) throw ParseError(origin, 0, "missing format line");

  const auto vertex = std::find_if(elements.begin(), elements.end(),
                                   [](const Element& e) { return e.name == "vertex"; });
  if (vertex == elements.end()) throw ParseError(origin, 0, "no vertex element");
  if (vertex->has_list) throw ParseError(origin, 0, "list properties on vertices are not supported");
  std::array<std::size_t, 3> column{};
  const char* names[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto it = std::find(vertex->properties.begin(), vertex->properties.end(), names[a]);
    if (it == vertex->properties.end()) {
      throw ParseError(origin, 0, std::string("vertex element lacks property '") + names[a] + "'");
    }
    column[a] = static_cast<std::size_t>(it - vertex->properties.begin());
  }

  // Body: elements appear in header order, one record per non-empty line.
  std::vector<Vec3> points;
  points.reserve(vertex->count);
  std::size_t element = 0;
  std::size_t seen = 0;
  pos = body_start;
  while (element < elements.size() && elements[element].count == 0) ++element;
  while (element < elements.size() && elements[element].name != "vertex") {
    if (pos >= text.size()) throw ParseError(origin, line_no, "unexpected end of file");
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++line_no;
    const bool blank = split_tokens(std::string_view(text).substr(pos, nl - pos)).empty();
    pos = nl + 1;
    if (blank) continue;
    if (++seen == elements[element].count) {
      seen = 0;
      ++element;
      while (element < elements.size() && elements[element].count == 0) ++element;
    }
  }
  while (points.size() < vertex->count) {
    if (pos >= text.size()) {
      throw ParseError(origin, line_no,
                       "expected " + std::to_string(vertex->count) + " vertices, found " +
                           std::to_string(points.size()));
    }
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++line_no;
    const auto tokens = split_tokens(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    if (tokens.empty()) continue;
    if (tokens.size() != vertex->properties.size()) {
      throw ParseError(origin, line_no,
                       "expected " + std::to_string(vertex->properties.size()) + " values, found " +
                           std::to_string(tokens.size()));
    }
    Vec3 p;
    for (std::size_t a = 0; a < 3; ++a) {
      if (!parse_real(tokens[column[a]], p[a])) {
        throw ParseError(origin, line_no, "invalid coordinate '" + std::string(tokens[column[a]]) + "'");
      }
    }
    points.push_back(p);
  }
  return finish(std::move(points), origin);
}

PointCloud load_cloud(const std::string& path, CloudFormat format) {
  const std::string text = read_file(path);
  switch (format) {
    case CloudFormat::Xyz:
      return parse_xyz(text, path);
    case CloudFormat::Ply:
      return parse_ply(text, path);
    case CloudFormat::Text:
      return parse_text(text, path);
  }
  throw_argument("unknown cloud format");
}

PointCloud load_cloud(const std::string& path) { return load_cloud(path, format_from_path(path)); }

namespace {
void append_real(std::string& out, double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}
}  // namespace

std::string format_xyz(std::span<const Vec3> points) {
  std::string out;
  out.reserve(points.size() * 48);
  for (const auto& p : points) {
    append_real(out, p.x);
    out.push_back(' ');
    append_real(out, p.y);
    out.push_back(' ');
    append_real(out, p.z);
    out.push_back('\n');
  }
  return out;
}

void write_xyz(const std::string& path, std::span<const Vec3> points) {
  write_file(path, format_xyz(points));
}

void write_ply(const std::string& path, std::span<const Vec3> points) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(points.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  out += format_xyz(points);
  write_file(path, out);
}

AnnotationSet parse_annotations(const std::string& json_text, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin, 0, "invalid JSON at byte " + std::to_string(e.byte));
  }
  if (!doc.is_array()) throw ParseError(origin, 0, "annotation file must be a JSON array");
  std::vector<Annotation> keypoints;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    const std::string where = "annotation " + std::to_string(i);
    if (!item.is_object() || !item.contains("xyz") || !item.contains("semantic_id")) {
      throw ParseError(origin, 0, where + " needs 'xyz' and 'semantic_id'");
    }
    const auto& xyz = item["xyz"];
    if (!xyz.is_array() || xyz.size() != 3 ||
        !std::all_of(xyz.begin(), xyz.end(), [](const auto& v) { return v.is_number(); })) {
      throw ParseError(origin, 0, where + ": 'xyz' must be three numbers");
    }
    if (!item["semantic_id"].is_number_integer()) {
      throw ParseError(origin, 0, where + ": 'semantic_id' must be an integer");
    }
    keypoints.push_back(
        {{xyz[0].get<double>(), xyz[1].get<double>(), xyz[2].get<double>()},
         item["semantic_id"].get<int>()});
  }
  if (keypoints.empty()) throw Error(ErrorKind::EmptyInput, origin + ": no annotations");
  return AnnotationSet(std::move(keypoints));
}

AnnotationSet load_annotations(const std::string& path) {
  return parse_annotations(read_file(path), path);
}

// ---------------------------------------------------------------------------
// Preprocessing

std::vector<Vec3> NormalizeTransform::invert(std::span<const Vec3> points) const {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(invert(p));
  return out;
}

NormalizedCloud normalize(const PointCloud& cloud) {
  const double diagonal = BoundingBox::of(cloud.points()).diagonal();
  if (!(diagonal > 0.0)) throw Error(ErrorKind::Degenerate, "cloud has zero bounding-box diagonal");
  NormalizeTransform t{cloud.centroid(), diagonal};
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(t.apply(p));
  return {PointCloud(std::move(out)), t};
}

NearestResult nearest_neighbor(const Vec3& query, std::span<const Vec3> target) {
  if (target.empty()) throw_argument("nearest_neighbor: empty target");
  std::size_t best = 0;
  double best_sq = squared_distance(query, target[0]);
  for (std::size_t i = 1; i < target.size(); ++i) {
    const double sq = squared_distance(query, target[i]);
    if (sq < best_sq) {
      best_sq = sq;
      best = i;
    }
  }
  return {best, std::sqrt(best_sq)};
}

NearestResult nearest_neighbor(const Vec3& query, const PointCloud& target) {
  return nearest_neighbor(query, target.points());
}

std::vector<std::size_t> farthest_point_sample_from(const PointCloud& cloud, std::size_t k,
                                                    std::size_t start) {
  const std::size_t n = cloud.size();
  if (k == 0 || k > n) {
    throw_argument("farthest_point_sample: k=" + std::to_string(k) + " outside [1, " +
                   std::to_string(n) + "]");
  }
  if (start >= n) throw_argument("farthest_point_sample: start index out of range");
  std::vector<std::size_t> chosen{start};
  std::vector<bool> taken(n, false);
  taken[start] = true;
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  std::size_t last = start;
  while (chosen.size() < k) {
    std::size_t best = n;
    double best_sq = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_sq[i] = std::min(min_sq[i], squared_distance(cloud[i], cloud[last]));
      if (min_sq[i] > best_sq) {
        best_sq = min_sq[i];
        best = i;
      }
    }
    taken[best] = true;
    chosen.push_back(best);
    last = best;
  }
  return chosen;
}

std::size_t fps_start_index(const PointCloud& cloud, std::uint64_t seed) {
  const CounterRng rng(seed, 0x5f5);
  Vec3 dir{rng.normal(0), rng.normal(1), rng.normal(2)};
  if (squared_norm(dir) == 0.0) dir = {1.0, 0.0, 0.0};
  std::size_t best = 0;
  double best_proj = dot(cloud[0], dir);
  for (std::size_t i = 1; i < cloud.size(); ++i) {
    const double proj = dot(cloud[i], dir);
    if (proj > best_proj) {
      best_proj = proj;
      best = i;
    }
  }
  return best;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::uint64_t seed) {
  return farthest_point_sample_from(cloud, k, fps_start_index(cloud, seed));
}

PointCloud subsample(const PointCloud& cloud, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw_argument("subsample ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  const std::size_t n = cloud.size();
  const auto m = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  if (m == 0) throw_argument("subsample ratio leaves no points");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const CounterRng rng(seed, 0x5b5);
  std::uint64_t counter = 0;
  for (std::size_t i = 0; i < m; ++i) {  // partial Fisher-Yates
    const auto j = i + static_cast<std::size_t>(rng.below(n - i, counter));
    std::swap(order[i], order[j]);
  }
  order.resize(m);
  std::sort(order.begin(), order.end());
  std::vector<Vec3> out;
  out.reserve(m);
  for (const auto i : order) out.push_back(cloud[i]);
  return PointCloud(std::move(out));
}

PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw_argument("noise sigma must be finite and non-negative");
  }
  const CounterRng rng(seed, 0x6a55);
  std::vector<Vec3> out(cloud.points().begin(), cloud.points().end());
  if (sigma == 0.0) return PointCloud(std::move(out));
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) out[i][a] += sigma * rng.normal(3 * i + a);
  }
  return PointCloud(std::move(out));
}

std::vector<Vec3> sample_box_uniform(const BoundingBox& box, std::size_t count, std::uint64_t seed) {
  const CounterRng rng(seed, 0xb0c5);
  std::vector<Vec3> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t a = 0; a < 3; ++a) {
      out[i][a] = box.min[a] + (box.max[a] - box.min[a]) * rng.uniform(3 * i + a);
    }
  }
  return out;
}

}  // namespace skelfit
