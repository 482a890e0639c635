#include "skelfit/serialization.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "skelfit/error.hpp"

namespace skelfit {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json to_json(const Vec3& p) { return ordered_json::array({p.x, p.y, p.z}); }

Vec3 vec3_from(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3 ||
      !std::all_of(j.begin(), j.end(), [](const auto& v) { return v.is_number(); })) {
    throw_argument(what + " must be an array of three numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json parse_json(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(origin, 0, "invalid JSON at byte " + std::to_string(e.byte));
  }
}

ordered_json skeleton_object(const SkeletonDocument& doc) {
  ordered_json j;
  j["k"] = doc.keypoints.size();
  j["keypoints"] = ordered_json::array();
  for (const auto& p : doc.keypoints) j["keypoints"].push_back(to_json(p));
  j["edges"] = ordered_json::array();
  for (const auto& e : doc.edges) j["edges"].push_back(ordered_json::array({e.u, e.v}));
  j["activations"] = doc.activations;
  j["plan"] = ordered_json{{"M", doc.plan.total_budget}, {"n", doc.plan.counts}};
  return j;
}

}  // namespace

std::string skeleton_to_json(const SkeletonDocument& doc, int indent) {
  return skeleton_object(doc).dump(indent);
}

SkeletonDocument skeleton_from_json(const std::string& text) {
  const auto j = parse_json(text, "skeleton");
  try {
    if (!j.is_object()) throw_argument("skeleton must be a JSON object");
    for (const char* key : {"k", "keypoints", "edges", "activations", "plan"}) {
      if (!j.contains(key)) throw_argument(std::string("skeleton lacks '") + key + "'");
    }
    if (!j["k"].is_number_unsigned()) throw_argument("'k' must be a non-negative integer");
    const auto k = j["k"].get<std::size_t>();
    SkeletonDocument doc;
    if (!j["keypoints"].is_array() || j["keypoints"].size() != k) {
      throw_argument("'keypoints' must hold k points");
    }
    for (const auto& p : j["keypoints"]) doc.keypoints.push_back(vec3_from(p, "keypoint"));
    const auto expected = enumerate_edges(k);
    if (!j["edges"].is_array() || j["edges"].size() != expected.size()) {
      throw_argument("'edges' must hold k(k-1)/2 pairs");
    }
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
        throw_argument("edge must be a pair of indices");
      }
      doc.edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
    }
    if (doc.edges != expected) throw_argument("edges are not in lexicographic order");
    doc.activations = j["activations"].get<std::vector<double>>();
    if (doc.activations.size() != expected.size()) throw_argument("'activations' length mismatch");
    for (const double a : doc.activations) {
      if (!(a >= 0.0 && a <= 1.0)) throw_argument("activation outside [0, 1]");
    }
    const auto& plan = j["plan"];
    if (!plan.is_object() || !plan.contains("M") || !plan.contains("n")) {
      throw_argument("'plan' must hold 'M' and 'n'");
    }
    doc.plan.total_budget = plan["M"].get<std::size_t>();
    doc.plan.counts = plan["n"].get<std::vector<std::size_t>>();
    if (doc.plan.counts.size() != expected.size()) throw_argument("'plan.n' length mismatch");
    for (const auto n : doc.plan.counts) {
      if (n == 0) throw_argument("'plan.n' entries must be positive");
    }
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("skeleton: ") + e.what());
  }
}

SkeletonDocument load_skeleton(const std::string& path) {
  try {
    return skeleton_from_json(read_text(path));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw ParseError(path, 0, e.what());
  }
}

// ---------------------------------------------------------------------------
// FitConfig

namespace {

template <typename T>
T get_number(const nlohmann::json& j, const std::string& key) {
  const auto& v = j[key];
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned()) throw_argument("config: '" + key + "' must be a non-negative integer");
  } else {
    if (!v.is_number()) throw_argument("config: '" + key + "' must be a number");
  }
  return v.get<T>();
}

}  // namespace

FitConfig fit_config_from_json(const std::string& text) {
  const auto j = parse_json(text, "config");
  if (!j.is_object()) throw_argument("config must be a JSON object");
  static const std::set<std::string> known = {
      "k",          "total_budget", "learning_rate", "activation_rate_scale", "lr_decay", "decay_interval",
      "iterations", "gamma",        "lambda_f",      "lambda_c",   "normalize_losses",
      "lambda_reg", "seed",         "keypoint_mode", "init_keypoints", "threads",
      "adam_beta1", "adam_beta2",   "adam_epsilon"};
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw_argument("config: unknown key '" + item.key() + "'");
  }
  if (!j.contains("k")) throw_argument("config: 'k' is required");

  FitConfig c;
  c.k = get_number<std::size_t>(j, "k");
  if (j.contains("total_budget")) c.total_budget = get_number<std::size_t>(j, "total_budget");
  if (j.contains("learning_rate")) c.learning_rate = get_number<double>(j, "learning_rate");
  if (j.contains("activation_rate_scale")) {
    c.activation_rate_scale = get_number<double>(j, "activation_rate_scale");
  }
  if (j.contains("lr_decay")) c.lr_decay = get_number<double>(j, "lr_decay");
  if (j.contains("decay_interval")) c.decay_interval = get_number<std::size_t>(j, "decay_interval");
  if (j.contains("iterations")) c.iterations = get_number<std::size_t>(j, "iterations");
  if (j.contains("gamma")) c.ccd.gamma = get_number<double>(j, "gamma");
  if (j.contains("lambda_f")) c.ccd.lambda_f = get_number<double>(j, "lambda_f");
  if (j.contains("lambda_c")) c.ccd.lambda_c = get_number<double>(j, "lambda_c");
  if (j.contains("normalize_losses")) {
    if (!j["normalize_losses"].is_boolean()) throw_argument("config: 'normalize_losses' must be a boolean");
    c.ccd.normalize = j["normalize_losses"].get<bool>();
  }
  if (j.contains("threads")) c.ccd.threads = get_number<unsigned>(j, "threads");
  if (j.contains("lambda_reg")) c.lambda_reg = get_number<double>(j, "lambda_reg");
  if (j.contains("seed")) c.seed = get_number<std::uint64_t>(j, "seed");
  if (j.contains("keypoint_mode")) {
    const auto& m = j["keypoint_mode"];
    if (m == "convex") {
      c.keypoint_mode = KeypointMode::Convex;
    } else if (m == "free") {
      c.keypoint_mode = KeypointMode::Free;
    } else {
      throw_argument("config: 'keypoint_mode' must be \"convex\" or \"free\"");
    }
  }
  if (j.contains("init_keypoints")) {
    if (!j["init_keypoints"].is_array()) throw_argument("config: 'init_keypoints' must be an array");
    for (const auto& p : j["init_keypoints"]) c.init_keypoints.push_back(vec3_from(p, "init_keypoints entry"));
  }
  if (j.contains("adam_beta1")) c.adam_beta1 = get_number<double>(j, "adam_beta1");
  if (j.contains("adam_beta2")) c.adam_beta2 = get_number<double>(j, "adam_beta2");
  if (j.contains("adam_epsilon")) c.adam_epsilon = get_number<double>(j, "adam_epsilon");
  c.validate();
  return c;
}

std::string fit_config_to_json(const FitConfig& c, int indent) {
  ordered_json j;
  j["k"] = c.k;
  j["total_budget"] = c.total_budget;
  j["learning_rate"] = c.learning_rate;
  j["activation_rate_scale"] = c.activation_rate_scale;
  j["lr_decay"] = c.lr_decay;
  j["decay_interval"] = c.decay_interval;
  j["iterations"] = c.iterations;
  j["gamma"] = c.ccd.gamma;
  j["lambda_f"] = c.ccd.lambda_f;
  j["lambda_c"] = c.ccd.lambda_c;
  j["normalize_losses"] = c.ccd.normalize;
  j["lambda_reg"] = c.lambda_reg;
  j["seed"] = c.seed;
  j["keypoint_mode"] = c.keypoint_mode == KeypointMode::Convex ? "convex" : "free";
  if (!c.init_keypoints.empty()) {
    j["init_keypoints"] = ordered_json::array();
    for (const auto& p : c.init_keypoints) j["init_keypoints"].push_back(to_json(p));
  }
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  return j.dump(indent);
}

std::string fit_report_to_json(const FitReport& report, const NormalizeTransform& frame, int indent) {
  SkeletonDocument doc{frame.invert(report.skeleton.keypoints), report.skeleton.edges,
                       report.activations, report.plan};
  ordered_json j;
  j["skeleton"] = skeleton_object(doc);
  j["normalization"] = ordered_json{{"center", to_json(frame.center)}, {"scale", frame.scale}};
  j["iterations"] = report.history.size();
  j["best_iteration"] = report.best_iteration;
  j["converged"] = report.converged;
  if (report.best_iteration < report.history.size()) {
    const auto& b = report.history[report.best_iteration];
    j["best_loss"] = ordered_json{
        {"total", b.total}, {"fidelity", b.fidelity}, {"coverage", b.coverage}, {"penalty", b.penalty}};
  }
  j["history"] = ordered_json::array();
  for (const auto& h : report.history) {
    j["history"].push_back(ordered_json::array({h.total, h.fidelity, h.coverage, h.penalty}));
  }
  return j.dump(indent);
}

std::string metric_report_to_json(const MetricReport& report, int indent) {
  ordered_json j;
  j["metric"] = report.metric;
  j["per_instance"] = report.per_instance;
  j["aggregate"] = report.aggregate;
  j["config"] = report.config_json.empty() ? ordered_json::object()
                                           : ordered_json::parse(report.config_json);
  return j.dump(indent);
}

std::string histogram_to_json(const DistanceHistogram& h, int indent) {
  static const char* names[3] = {"skeleton", "keypoints", "bbox"};
  ordered_json j;
  j["bins"] = h.bins;
  j["max_distance"] = h.max_distance;
  j["bin_width"] = h.bin_width();
  j["series"] = ordered_json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    j["series"][names[s]] = ordered_json{{"counts", h.counts[s]}, {"median", h.medians[s]}};
  }
  return j.dump(indent);
}

}  // namespace skelfit
