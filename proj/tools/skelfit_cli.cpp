// skelfit command line tool. Uses only the C API.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skelfit/skelfit.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;
constexpr int kExitInternal = 1;

// A failure that ends the command with `exit_code` and a JSON error report.
struct CliError {
  int exit_code;
  std::string kind;
  std::string message;
  std::string path;
  std::size_t line = 0;
};

int exit_code_for(int status) {
  switch (status) {
    case SKELFIT_ERROR_IO: return kExitIo;
    case SKELFIT_ERROR_DIVERGENCE: return kExitDivergence;
    case SKELFIT_ERROR_INTERNAL: return kExitInternal;
    default: return kExitUsage;
  }
}

void check(int status, const skelfit_error& err, const std::string& path = {}) {
  if (status == SKELFIT_OK) return;
  throw CliError{exit_code_for(status), skelfit_v1_status_name(status), err.message, path, err.line};
}

[[noreturn]] void usage_error(const std::string& message, const std::string& path = {}) {
  throw CliError{kExitUsage, "usage", message, path};
}

// ---- owning wrappers over C handles ---------------------------------------

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Cloud = std::unique_ptr<skelfit_cloud, Deleter<skelfit_cloud, skelfit_v1_cloud_free>>;
using Fit = std::unique_ptr<skelfit_fit, Deleter<skelfit_fit, skelfit_v1_fit_free>>;
using SkeletonDoc = std::unique_ptr<skelfit_skeleton, Deleter<skelfit_skeleton, skelfit_v1_skeleton_free>>;
using Annotations =
    std::unique_ptr<skelfit_annotations, Deleter<skelfit_annotations, skelfit_v1_annotations_free>>;

std::string take_string(char* s) {
  std::string out(s);
  skelfit_v1_string_free(s);
  return out;
}

Cloud load_cloud(const std::string& path) {
  skelfit_cloud* c = nullptr;
  skelfit_error err{};
  check(skelfit_v1_cloud_load(path.c_str(), nullptr, &c, &err), err, path);
  return Cloud(c);
}

std::vector<double> cloud_xyz(const skelfit_cloud* c) {
  const double* d = skelfit_v1_cloud_data(c);
  return {d, d + 3 * skelfit_v1_cloud_size(c)};
}

SkeletonDoc load_skeleton(const std::string& path) {
  skelfit_skeleton* s = nullptr;
  skelfit_error err{};
  check(skelfit_v1_skeleton_load(path.c_str(), &s, &err), err, path);
  return SkeletonDoc(s);
}

Annotations load_annotations(const std::string& path) {
  skelfit_annotations* a = nullptr;
  skelfit_error err{};
  check(skelfit_v1_annotations_load(path.c_str(), &a, &err), err, path);
  return Annotations(a);
}

/// Keypoints from a skeleton JSON document or any cloud file.
std::vector<double> load_keypoints(const std::string& path) {
  if (fs::path(path).extension() == ".json") {
    const auto s = load_skeleton(path);
    const double* d = skelfit_v1_skeleton_keypoints(s.get());
    return {d, d + 3 * skelfit_v1_skeleton_keypoint_count(s.get())};
  }
  return cloud_xyz(load_cloud(path).get());
}

// ---- files, digests, time ---------------------------------------------------

std::string read_file(const std::string& path, int exit_code) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{exit_code, "io", "cannot open '" + path + "'", path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  out << contents;
  out.close();
  if (!out) throw CliError{kExitIo, "io", "cannot write '" + path + "'", path};
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw CliError{kExitInternal, "internal", "sha256 failed", ""};
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string file_digest(const std::string& path) { return sha256_hex(read_file(path, kExitIo)); }

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// SKELFIT_THREADS, 0 = hardware concurrency. Unset means 0.
unsigned env_threads() {
  const char* v = std::getenv("SKELFIT_THREADS");
  if (v == nullptr || *v == '\0') return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 0) usage_error(std::string("SKELFIT_THREADS must be a non-negative integer, got '") + v + "'");
  return static_cast<unsigned>(n);
}

unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---- run manifest -----------------------------------------------------------

/// Written with status "running" before any work and rewritten when the
/// command finishes.
class Manifest {
 public:
  Manifest(std::string path, std::string command, const std::vector<std::string>& argv)
      : path_(std::move(path)) {
    doc_["command"] = std::move(command);
    doc_["argv"] = argv;
    doc_["tool_version"] = skelfit_v1_version();
    doc_["seed"] = nullptr;
    doc_["config_digest"] = nullptr;
    doc_["inputs"] = json::array();
    doc_["outputs"] = json::array();
    doc_["parameters"] = json::object();
    doc_["warnings"] = json::array();
    doc_["status"] = "running";
    doc_["started_at"] = utc_now();
    doc_["finished_at"] = nullptr;
  }

  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void config_digest(const std::string& d) { doc_["config_digest"] = d; }
  void parameter(const std::string& key, json value) { doc_["parameters"][key] = std::move(value); }
  void input(const std::string& path) {
    doc_["inputs"].push_back(json{{"path", path}, {"sha256", file_digest(path)}});
  }
  void output(const std::string& path) {
    doc_["outputs"].push_back(json{{"path", path}, {"sha256", file_digest(path)}});
  }
  void warn(const std::string& message) {
    std::cerr << "warning: " << message << "\n";
    doc_["warnings"].push_back(message);
  }

  void write() const { write_file(path_, doc_.dump(2) + "\n"); }

  void finish(int exit_code, const json& error = nullptr) {
    doc_["status"] = exit_code == 0 ? "ok" : "error";
    doc_["exit_code"] = exit_code;
    if (!error.is_null()) doc_["error"] = error;
    doc_["finished_at"] = utc_now();
    write();
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  json doc_;
};

json error_json(const CliError& e) {
  json j{{"kind", e.kind}, {"exit_code", e.exit_code}, {"message", e.message}};
  if (!e.path.empty()) j["path"] = e.path;
  if (e.line != 0) j["line"] = e.line;
  return json{{"error", j}};
}

// ---- SVG --------------------------------------------------------------------

struct Series {
  std::string name;
  std::string color;
  std::vector<double> y;
};

/// Line plot of one or more series over a shared x axis [x0, x1].
std::string svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                     double x0, double x1, const std::vector<Series>& series, bool log_y) {
  const double width = 640;
  const double height = 400;
  const double left = 70;
  const double right = 20;
  const double top = 40;
  const double bottom = 50;
  auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-12)) : v; };
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (const double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, ty(v));
      hi = std::max(hi, ty(v));
    }
  }
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1 : 0;
    hi = lo + 2;
  }
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.0) * pw; };
  auto py = [&](double v) { return top + (1.0 - (ty(v) - lo) / (hi - lo)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<title>" << title << "</title>\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n";
  svg << "</g>\n";
  svg << "<g class=\"labels\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  svg << "<text x=\"15\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 15 " << top + ph / 2
      << ")\" text-anchor=\"middle\">" << y_label << (log_y ? " (log10)" : "") << "</text>\n";
  svg << "<text x=\"" << left - 5 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << number(lo) << "</text>\n";
  svg << "<text x=\"" << left - 5 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << number(hi) << "</text>\n";
  svg << "<text x=\"" << left << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << number(x0)
      << "</text>\n";
  svg << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << number(x1)
      << "</text>\n";
  svg << "</g>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    svg << "<polyline class=\"series\" data-name=\"" << ser.name << "\" fill=\"none\" stroke=\"" << ser.color
        << "\" stroke-width=\"1.5\" points=\"";
    const std::size_t n = ser.y.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double x = n > 1 ? x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(n - 1) : x0;
      svg << (i ? " " : "") << number(px(x)) << "," << number(py(ser.y[i]));
    }
    svg << "\"/>\n";
    svg << "<text font-family=\"sans-serif\" font-size=\"12\" fill=\"" << ser.color << "\" x=\"" << left + pw - 120
        << "\" y=\"" << top + 15 * (s + 1) << "\">" << ser.name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// ---- commands -----------------------------------------------------------------

struct FitArgs {
  std::string input;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_fit(const FitArgs& a, Manifest& manifest) {
  const std::string config_text = read_file(a.config, kExitUsage);
  json config;
  try {
    config = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw CliError{kExitUsage, "parse", std::string("config is not valid JSON: ") + e.what(), a.config};
  }
  if (!config.is_object()) usage_error("config must be a JSON object", a.config);
  if (a.seed) config["seed"] = *a.seed;
  if (!config.contains("threads")) config["threads"] = env_threads();
  manifest.input(a.input);
  manifest.input(a.config);
  manifest.config_digest(sha256_hex(config.dump()));
  manifest.seed(config.value("seed", std::uint64_t{0}));
  manifest.parameter("effective_config", config);
  manifest.write();

  const Cloud raw = load_cloud(a.input);
  skelfit_cloud* normalized_handle = nullptr;
  double center[3];
  double scale = 1.0;
  skelfit_error err{};
  check(skelfit_v1_cloud_normalize(raw.get(), &normalized_handle, center, &scale, &err), err, a.input);
  const Cloud normalized(normalized_handle);
  manifest.parameter("normalization", json{{"center", {center[0], center[1], center[2]}}, {"scale", scale}});

  skelfit_fit* fit_handle = nullptr;
  const int status = skelfit_v1_fit_run(normalized.get(), config.dump().c_str(), &fit_handle, &err);
  const Fit fit(fit_handle);
  if (status != SKELFIT_OK && status != SKELFIT_ERROR_DIVERGENCE) check(status, err, a.config);
  const CliError divergence{kExitDivergence, skelfit_v1_status_name(status), err.message, ""};

  // Partial results are still written on divergence.
  fs::create_directories(a.out);
  auto path = [&](const char* name) { return (fs::path(a.out) / name).string(); };

  char* text = nullptr;
  check(skelfit_v1_fit_skeleton_json(fit.get(), center, scale, &text, &err), err);
  write_file(path("skeleton.json"), take_string(text) + "\n");
  check(skelfit_v1_fit_report_json(fit.get(), center, scale, &text, &err), err);
  write_file(path("report.json"), take_string(text) + "\n");

  const std::size_t rows = skelfit_v1_fit_history_length(fit.get());
  const double* h = skelfit_v1_fit_history(fit.get());
  std::vector<Series> series{{"total", "#1f77b4", {}}, {"fidelity", "#2ca02c", {}}, {"coverage", "#d62728", {}}};
  for (std::size_t i = 0; i < rows; ++i) {
    series[0].y.push_back(h[4 * i] + h[4 * i + 3]);
    series[1].y.push_back(h[4 * i + 1]);
    series[2].y.push_back(h[4 * i + 2]);
  }
  write_file(path("loss_curve.svg"),
             svg_plot("Loss per iteration", "iteration", "loss", 0, rows ? double(rows - 1) : 0.0, series, true));

  // x y z edge, in input coordinates.
  std::string recon;
  const double* pts = skelfit_v1_fit_reconstruction(fit.get());
  const std::size_t* offsets = skelfit_v1_fit_reconstruction_offsets(fit.get());
  const std::size_t edges = skelfit_v1_fit_edge_count(fit.get());
  for (std::size_t e = 0; e < edges; ++e) {
    for (std::size_t i = offsets[e]; i < offsets[e + 1]; ++i) {
      for (std::size_t c = 0; c < 3; ++c) recon += number(pts[3 * i + c] * scale + center[c]) + " ";
      recon += std::to_string(e) + "\n";
    }
  }
  write_file(path("reconstruction.xyz"), recon);

  for (const char* name : {"skeleton.json", "report.json", "loss_curve.svg", "reconstruction.xyz"}) {
    manifest.output(path(name));
  }
  manifest.parameter("best_iteration", skelfit_v1_fit_best_iteration(fit.get()));
  manifest.parameter("converged", skelfit_v1_fit_converged(fit.get()) != 0);
  manifest.parameter("wall_time_seconds", skelfit_v1_fit_wall_time(fit.get()));
  if (status == SKELFIT_ERROR_DIVERGENCE) throw divergence;
  return 0;
}

struct PerturbArgs {
  std::string input;
  std::string mode;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_perturb(const PerturbArgs& a, Manifest& manifest) {
  manifest.seed(a.seed);
  manifest.parameter("mode", a.mode);
  manifest.parameter("magnitude", a.magnitude);
  manifest.input(a.input);
  manifest.write();
  if (a.mode == "noise" && !(a.magnitude >= 0.0 && std::isfinite(a.magnitude))) {
    usage_error("noise magnitude must be a finite non-negative sigma");
  }
  if (a.mode == "subsample" && !(a.magnitude > 0.0 && a.magnitude <= 1.0)) {
    usage_error("subsample magnitude must be a ratio in (0, 1]");
  }
  const Cloud cloud = load_cloud(a.input);
  skelfit_cloud* out = nullptr;
  skelfit_error err{};
  if (a.mode == "noise") {
    check(skelfit_v1_cloud_add_noise(cloud.get(), a.magnitude, a.seed, &out, &err), err);
  } else {
    check(skelfit_v1_cloud_subsample(cloud.get(), a.magnitude, a.seed, &out, &err), err);
  }
  const Cloud result(out);
  check(skelfit_v1_cloud_write(result.get(), a.out.c_str(), nullptr, &err), err, a.out);
  manifest.parameter("points_in", skelfit_v1_cloud_size(cloud.get()));
  manifest.parameter("points_out", skelfit_v1_cloud_size(result.get()));
  manifest.output(a.out);
  return 0;
}

struct EvalArgs {
  std::string metric;
  std::string config;
  std::string out;
  std::vector<std::string> inputs;
};

/// Runs `work(i)` for i in [0, n) on up to `threads` workers. Results land in
/// index order; the first failure (lowest index) is rethrown.
template <typename F>
std::vector<double> parallel_map(std::size_t n, unsigned threads, F work) {
  std::vector<double> out(n);
  std::vector<std::optional<CliError>> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = work(i);
      } catch (const CliError& e) {
        errors[i] = e;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned count = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  for (unsigned t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) throw *e;
  }
  return out;
}

int cmd_eval(const EvalArgs& a, Manifest& manifest) {
  json config = json::object();
  if (!a.config.empty()) {
    const std::string text = read_file(a.config, kExitUsage);
    try {
      config = json::parse(text);
    } catch (const json::parse_error& e) {
      throw CliError{kExitUsage, "parse", std::string("config is not valid JSON: ") + e.what(), a.config};
    }
    if (!config.is_object()) usage_error("config must be a JSON object", a.config);
    manifest.input(a.config);
  }
  manifest.config_digest(sha256_hex(config.dump()));
  manifest.parameter("metric", a.metric);
  for (const auto& p : a.inputs) manifest.input(p);
  manifest.write();

  const unsigned threads = env_threads();
  const auto& in = a.inputs;
  json report;
  report["metric"] = a.metric;
  std::vector<double> scores;
  json extra = json::object();

  if (a.metric == "miou") {
    if (in.empty() || in.size() % 2 != 0) {
      usage_error("miou takes pairs of <predictions> <annotations>, got " + std::to_string(in.size()) + " inputs");
    }
    const double threshold = config.value("threshold", 0.1);
    const std::string rule_name = config.value("rule", std::string("greedy"));
    if (rule_name != "greedy" && rule_name != "hungarian") usage_error("rule must be \"greedy\" or \"hungarian\"");
    const int rule = rule_name == "greedy" ? SKELFIT_MATCH_GREEDY : SKELFIT_MATCH_HUNGARIAN;
    const std::size_t n = in.size() / 2;
    std::vector<std::array<std::size_t, 3>> counts(n);
    scores = parallel_map(n, threads, [&](std::size_t i) {
      const auto pred = load_keypoints(in[2 * i]);
      const auto anno = load_annotations(in[2 * i + 1]);
      double iou = 0.0;
      skelfit_error err{};
      check(skelfit_v1_miou(pred.data(), pred.size() / 3, anno.get(), threshold, rule, counts[i].data(), &iou, &err),
            err, in[2 * i]);
      return iou;
    });
    std::array<std::size_t, 3> pooled{};
    for (const auto& c : counts) {
      for (std::size_t j = 0; j < 3; ++j) pooled[j] += c[j];
    }
    const std::size_t denom = pooled[0] + pooled[1] + pooled[2];
    extra["pooled"] = json{{"true_positives", pooled[0]},
                           {"false_positives", pooled[1]},
                           {"false_negatives", pooled[2]},
                           {"iou", denom == 0 ? 0.0 : double(pooled[0]) / double(denom)}};
    config["threshold"] = threshold;
    config["rule"] = rule_name;
  } else if (a.metric == "das") {
    if (in.size() < 4 || in.size() % 2 != 0) {
      usage_error("das takes at least two instances as <predictions> <annotations> pairs, got " +
                  std::to_string(in.size()) + " inputs");
    }
    const std::size_t n = in.size() / 2;
    const auto ref_pred = load_keypoints(in[0]);
    const auto ref_anno = load_annotations(in[1]);
    // The first instance is the reference; each other instance is scored in
    // both roles and the two scores are averaged.
    scores = parallel_map(n - 1, threads, [&](std::size_t i) {
      const auto pred = load_keypoints(in[2 * (i + 1)]);
      const auto anno = load_annotations(in[2 * (i + 1) + 1]);
      double forward[3];
      double backward[3];
      skelfit_error err{};
      check(skelfit_v1_das(ref_pred.data(), ref_pred.size() / 3, ref_anno.get(), pred.data(), pred.size() / 3,
                           anno.get(), forward, &err),
            err, in[2 * (i + 1)]);
      check(skelfit_v1_das(pred.data(), pred.size() / 3, anno.get(), ref_pred.data(), ref_pred.size() / 3,
                           ref_anno.get(), backward, &err),
            err, in[2 * (i + 1)]);
      return 0.5 * (forward[2] + backward[2]);
    });
    config["reference"] = in[0];
  } else if (a.metric == "repeatability") {
    if (in.empty() || in.size() % 3 != 0) {
      usage_error("repeatability takes triples of <original keypoints> <perturbed keypoints> <original cloud>, got " +
                  std::to_string(in.size()) + " inputs");
    }
    const double ratio = config.value("ratio", 0.1);
    scores = parallel_map(in.size() / 3, threads, [&](std::size_t i) {
      const auto orig = load_keypoints(in[3 * i]);
      const auto pert = load_keypoints(in[3 * i + 1]);
      const auto cloud = load_cloud(in[3 * i + 2]);
      double mn[3];
      double mx[3];
      double diagonal = 0.0;
      skelfit_error err{};
      check(skelfit_v1_cloud_bounding_box(cloud.get(), mn, mx, &diagonal, &err), err, in[3 * i + 2]);
      double score = 0.0;
      check(skelfit_v1_repeatability(orig.data(), orig.size() / 3, pert.data(), pert.size() / 3, diagonal, ratio,
                                     &score, &err),
            err, in[3 * i + 1]);
      return score;
    });
    config["ratio"] = ratio;
    config["model_size"] = "bounding-box diagonal of the original cloud";
  } else {
    usage_error("unknown metric '" + a.metric + "'");
  }

  double sum = 0.0;
  for (const double s : scores) sum += s;
  report["per_instance"] = scores;
  report["aggregate"] = scores.empty() ? 0.0 : sum / double(scores.size());
  report["config"] = config;
  for (auto& [key, value] : extra.items()) report[key] = value;
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_file(a.out, report.dump(2) + "\n");
  manifest.output(a.out);
  return 0;
}

struct AnalyzeArgs {
  std::string input;
  std::string skeleton;
  std::size_t bbox_samples = 3200;
  std::size_t bins = 50;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, Manifest& manifest) {
  manifest.seed(a.seed);
  manifest.parameter("bbox_samples", a.bbox_samples);
  manifest.parameter("bins", a.bins);
  manifest.input(a.input);
  manifest.input(a.skeleton);
  manifest.write();

  const Cloud cloud = load_cloud(a.input);
  const SkeletonDoc skeleton = load_skeleton(a.skeleton);

  // A skeleton fitted in another frame has keypoints far outside the cloud.
  double mn[3];
  double mx[3];
  double diagonal = 0.0;
  skelfit_error err{};
  check(skelfit_v1_cloud_bounding_box(cloud.get(), mn, mx, &diagonal, &err), err, a.input);
  const double* kp = skelfit_v1_skeleton_keypoints(skeleton.get());
  const double slack = 0.1 * diagonal;
  std::size_t outside = 0;
  for (std::size_t i = 0; i < skelfit_v1_skeleton_keypoint_count(skeleton.get()); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (kp[3 * i + c] < mn[c] - slack || kp[3 * i + c] > mx[c] + slack) {
        ++outside;
        break;
      }
    }
  }
  if (outside > 0) {
    manifest.warn(std::to_string(outside) +
                  " skeleton keypoints lie outside the cloud's bounding box; the skeleton and the cloud may "
                  "use different normalizations");
  }

  char* text = nullptr;
  check(skelfit_v1_distance_histogram(cloud.get(), skeleton.get(), a.bbox_samples, a.bins, a.seed, &text, &err), err);
  auto hist = json::parse(take_string(text));
  hist["bbox_samples"] = a.bbox_samples;
  hist["seed"] = a.seed;

  fs::create_directories(a.out);
  const auto json_path = (fs::path(a.out) / "histogram.json").string();
  const auto svg_path = (fs::path(a.out) / "histogram.svg").string();
  write_file(json_path, hist.dump(2) + "\n");
  std::vector<Series> series;
  const std::vector<std::pair<const char*, const char*>> names{
      {"skeleton", "#d62728"}, {"keypoints", "#1f77b4"}, {"bbox", "#2ca02c"}};
  for (const auto& [name, color] : names) {
    Series s{name, color, {}};
    for (const auto& c : hist["series"][name]["counts"]) s.y.push_back(c.get<double>());
    series.push_back(std::move(s));
  }
  write_file(svg_path, svg_plot("Nearest-neighbour distance histogram", "distance", "points", 0.0,
                                hist["max_distance"].get<double>(), series, false));
  manifest.output(json_path);
  manifest.output(svg_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit skeletons to point clouds and evaluate keypoints"};
  app.set_version_flag("--version", std::string(skelfit_v1_version()));
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a skeleton to one point cloud");
  fit->add_option("--input", fit_args.input, "Point cloud (.xyz, .ply, .txt)")->required();
  fit->add_option("--config", fit_args.config, "Fit configuration JSON")->required();
  fit->add_option("--out", fit_args.out, "Output directory")->required();
  fit->add_option("--seed", fit_args.seed, "Overrides the config seed");

  PerturbArgs perturb_args;
  auto* perturb = app.add_subcommand("perturb", "Add Gaussian noise or subsample a cloud");
  perturb->add_option("--input", perturb_args.input, "Point cloud")->required();
  perturb->add_option("--mode", perturb_args.mode, "noise or subsample")
      ->required()
      ->check(CLI::IsMember({"noise", "subsample"}));
  perturb->add_option("--magnitude", perturb_args.magnitude, "Noise sigma or keep ratio")->required();
  perturb->add_option("--seed", perturb_args.seed, "Random seed");
  perturb->add_option("--out", perturb_args.out, "Output cloud (.xyz or .ply)")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score keypoints with mIoU, DAS or repeatability");
  eval->add_option("--metric", eval_args.metric, "miou, das or repeatability")
      ->required()
      ->check(CLI::IsMember({"miou", "das", "repeatability"}));
  eval->add_option("--config", eval_args.config, "Metric configuration JSON");
  eval->add_option("--out", eval_args.out, "Report path")->required();
  eval->add_option("inputs", eval_args.inputs, "Input files, grouped per instance")->required();

  AnalyzeArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Nearest-distance histogram against a skeleton");
  analyze->add_option("--input", analyze_args.input, "Point cloud")->required();
  analyze->add_option("--skeleton", analyze_args.skeleton, "skeleton.json")->required();
  analyze->add_option("--bbox-samples", analyze_args.bbox_samples, "Uniform bounding-box samples")
      ->check(CLI::PositiveNumber);
  analyze->add_option("--bins", analyze_args.bins, "Histogram bins")->check(CLI::PositiveNumber);
  analyze->add_option("--seed", analyze_args.seed, "Random seed for the box samples");
  analyze->add_option("--out", analyze_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_json(CliError{kExitUsage, "usage", e.what(), ""}).dump() << "\n";
    return kExitUsage;
  }

  const std::vector<std::string> args(argv, argv + argc);
  std::string manifest_path;
  std::string command;
  if (fit->parsed()) {
    command = "fit";
    manifest_path = (fs::path(fit_args.out) / "manifest.json").string();
  } else if (perturb->parsed()) {
    command = "perturb";
    manifest_path = perturb_args.out + ".manifest.json";
  } else if (eval->parsed()) {
    command = "eval";
    manifest_path = eval_args.out + ".manifest.json";
  } else {
    command = "analyze";
    manifest_path = (fs::path(analyze_args.out) / "manifest.json").string();
  }

  std::optional<Manifest> manifest;
  try {
    if (const auto parent = fs::path(manifest_path).parent_path(); !parent.empty()) {
      std::error_code ec;
      fs::create_directories(parent, ec);
      if (ec) throw CliError{kExitIo, "io", "cannot create '" + parent.string() + "': " + ec.message(), parent.string()};
    }
    manifest.emplace(manifest_path, command, args);
    int code = 0;
    if (command == "fit") code = cmd_fit(fit_args, *manifest);
    if (command == "perturb") code = cmd_perturb(perturb_args, *manifest);
    if (command == "eval") code = cmd_eval(eval_args, *manifest);
    if (command == "analyze") code = cmd_analyze(analyze_args, *manifest);
    manifest->finish(code);
    return code;
  } catch (const CliError& e) {
    const json err = error_json(e);
    std::cerr << err.dump() << "\n";
    if (manifest) {
      try {
        manifest->finish(e.exit_code, err["error"]);
      } catch (const CliError&) {
      }
    }
    return e.exit_code;
  } catch (const std::exception& e) {
    const CliError internal{kExitInternal, "internal", e.what(), ""};
    std::cerr << error_json(internal).dump() << "\n";
    if (manifest) {
      try {
        manifest->finish(internal.exit_code, error_json(internal)["error"]);
      } catch (const CliError&) {
      }
    }
    return kExitInternal;
  }
}
