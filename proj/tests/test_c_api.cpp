#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "instances.hpp"
#include "shapes.hpp"
#include "skelfit/ccd.hpp"
#include "skelfit/optimizer.hpp"
#include "skelfit/skelfit.h"
#include "tempdir.hpp"

using namespace skelfit;
using namespace skelfit::testing;

namespace {

std::vector<double> flatten(std::span<const Vec3> pts) {
  std::vector<double> out;
  for (const auto& p : pts) out.insert(out.end(), {p.x, p.y, p.z});
  return out;
}

struct Flat {
  std::vector<double> input;
  std::vector<double> points;
  std::vector<std::size_t> offsets;
};

Flat flat_instance(const LossInstance& inst) {
  const auto table = to_table(inst.subclouds);
  return {flatten(inst.input), flatten(table.points()),
          std::vector<std::size_t>(table.offsets().begin(), table.offsets().end())};
}

skelfit_cloud* cloud_handle(std::span<const Vec3> pts) {
  const auto flat = flatten(pts);
  skelfit_cloud* c = nullptr;
  REQUIRE(skelfit_v1_cloud_from_xyz(flat.data(), pts.size(), &c, nullptr) == SKELFIT_OK);
  return c;
}

}  // namespace

TEST_SUITE("c_api") {
  TEST_CASE("version and status names") {
    CHECK(std::string(skelfit_v1_version()).size() > 0);
    CHECK(std::string(skelfit_v1_status_name(SKELFIT_ERROR_SHAPE)) != skelfit_v1_status_name(SKELFIT_OK));
  }

  TEST_CASE("loss parity with the in-process API") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto inst = random_instance(seed);
      const auto flat = flat_instance(inst);
      const std::size_t edges = inst.subclouds.size();
      CcdConfig cfg;
      const auto ref = ccd(PointCloud(inst.input), to_table(inst.subclouds), inst.activations, cfg);

      double losses[3];
      std::vector<double> gp(flat.points.size());
      std::vector<double> ga(edges);
      skelfit_error err;
      REQUIRE(skelfit_v1_ccd_forward_backward(flat.input.data(), inst.input.size(), flat.points.data(),
                                              flat.points.size() / 3, flat.offsets.data(), edges,
                                              inst.activations.data(), edges, cfg.gamma, cfg.lambda_f,
                                              cfg.lambda_c, losses, gp.data(), ga.data(), &err) == SKELFIT_OK);
      CHECK(losses[0] == ref.total);
      CHECK(losses[1] == ref.fidelity);
      CHECK(losses[2] == ref.coverage);
      CHECK(gp == flatten(ref.grad_points));
      CHECK(ga == ref.grad_activations);
      worst = std::max({worst, std::abs(losses[0] - ref.total), std::abs(losses[2] - ref.coverage)});
    }
    CHECK(worst == 0.0);
  }

  TEST_CASE("two sub-cloud instance across the boundary") {
    const double input[3] = {0, 0, 0};
    const double points[6] = {1, 0, 0, 0, 2, 0};
    const std::size_t offsets[3] = {0, 1, 2};
    const double a[2] = {0.6, 0.5};
    double losses[3];
    REQUIRE(skelfit_v1_ccd_forward_backward(input, 1, points, 2, offsets, 2, a, 2, 20.0, 1.0, 1.0, losses,
                                            nullptr, nullptr, nullptr) == SKELFIT_OK);
    CHECK(losses[2] == 1.6);
  }

  TEST_CASE("shape errors") {
    const double input[3] = {0, 0, 0};
    const double points[6] = {1, 0, 0, 0, 2, 0};
    const std::size_t offsets[3] = {0, 1, 2};
    const double a[2] = {0.6, 0.5};
    double losses[3];
    skelfit_error err;
    CHECK(skelfit_v1_ccd_forward_backward(input, 1, points, 2, offsets, 2, a, 0, 20.0, 1.0, 1.0, losses,
                                          nullptr, nullptr, &err) == SKELFIT_ERROR_SHAPE);
    CHECK(err.code == SKELFIT_ERROR_SHAPE);
    CHECK(std::strlen(err.message) > 0);
    const std::size_t bad_offsets[3] = {0, 2, 1};
    CHECK(skelfit_v1_ccd_forward_backward(input, 1, points, 2, bad_offsets, 2, a, 2, 20.0, 1.0, 1.0, losses,
                                          nullptr, nullptr, &err) == SKELFIT_ERROR_SHAPE);
    const std::size_t short_offsets[3] = {0, 1, 1};
    CHECK(skelfit_v1_ccd_forward_backward(input, 1, points, 2, short_offsets, 2, a, 2, 20.0, 1.0, 1.0, losses,
                                          nullptr, nullptr, &err) == SKELFIT_ERROR_SHAPE);
    CHECK(skelfit_v1_ccd_forward_backward(input, 0, points, 2, offsets, 2, a, 2, 20.0, 1.0, 1.0, losses,
                                          nullptr, nullptr, &err) == SKELFIT_ERROR_SHAPE);
    CHECK(skelfit_v1_ccd_forward_backward(input, 1, points, 2, offsets, 2, a, 2, -1.0, 1.0, 1.0, losses,
                                          nullptr, nullptr, &err) == SKELFIT_ERROR_ARGUMENT);
    const double big[2] = {1.5, 0.5};
    CHECK(skelfit_v1_ccd_forward_backward(input, 1, points, 2, offsets, 2, big, 2, 20.0, 1.0, 1.0, losses,
                                          nullptr, nullptr, &err) == SKELFIT_ERROR_ARGUMENT);
  }

  TEST_CASE("skeleton sampling parity") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const std::size_t k = 2 + seed % 6;
      const auto kp = random_points(k, 1.0, seed);
      const std::size_t budget = 50 + seed * 11;
      const auto sk = Skeleton::from_keypoints(kp);
      const auto ref = sample_edges(sk, plan_sampling(sk, budget));
      const auto flat = flatten(kp);
      skelfit_samples* s = nullptr;
      REQUIRE(skelfit_v1_sample_skeleton(flat.data(), k, budget, &s, nullptr) == SKELFIT_OK);
      REQUIRE(skelfit_v1_samples_point_count(s) == ref.size());
      REQUIRE(skelfit_v1_samples_edge_count(s) == ref.edge_count());
      const auto pts = flatten(ref.points());
      CHECK(std::equal(pts.begin(), pts.end(), skelfit_v1_samples_points(s)));
      CHECK(std::equal(ref.offsets().begin(), ref.offsets().end(), skelfit_v1_samples_offsets(s)));
      skelfit_v1_samples_free(s);
    }
    const double one[3] = {0, 0, 0};
    skelfit_samples* s = nullptr;
    skelfit_error err;
    CHECK(skelfit_v1_sample_skeleton(one, 1, 10, &s, &err) == SKELFIT_ERROR_ARGUMENT);
    CHECK(s == nullptr);
  }

  TEST_CASE("cloud handles") {
    TempDir dir;
    const auto path = dir.write("c.xyz", "0 0 0\n2 0 0\n1 1 0\n");
    skelfit_cloud* c = nullptr;
    skelfit_error err;
    REQUIRE(skelfit_v1_cloud_load(path.c_str(), nullptr, &c, &err) == SKELFIT_OK);
    CHECK(skelfit_v1_cloud_size(c) == 3);
    CHECK(skelfit_v1_cloud_data(c)[3] == 2.0);

    double mn[3];
    double mx[3];
    double diag = 0.0;
    REQUIRE(skelfit_v1_cloud_bounding_box(c, mn, mx, &diag, &err) == SKELFIT_OK);
    CHECK(mx[0] == 2.0);
    CHECK(diag == doctest::Approx(std::sqrt(5.0)));

    skelfit_cloud* n = nullptr;
    double center[3];
    double scale = 0.0;
    REQUIRE(skelfit_v1_cloud_normalize(c, &n, center, &scale, &err) == SKELFIT_OK);
    CHECK(scale == doctest::Approx(std::sqrt(5.0)));
    CHECK(center[0] == doctest::Approx(1.0));

    skelfit_cloud* sub = nullptr;
    REQUIRE(skelfit_v1_cloud_subsample(c, 0.34, 1, &sub, &err) == SKELFIT_OK);
    CHECK(skelfit_v1_cloud_size(sub) == 1);

    std::size_t idx[2];
    REQUIRE(skelfit_v1_cloud_farthest_point_sample(c, 2, 0, idx, &err) == SKELFIT_OK);
    CHECK(idx[0] != idx[1]);

    const double q[3] = {1.9, 0.1, 0};
    std::size_t nearest = 99;
    double d = 0;
    REQUIRE(skelfit_v1_cloud_nearest(c, q, &nearest, &d, &err) == SKELFIT_OK);
    CHECK(nearest == 1);

    const auto out = dir.file("out.ply");
    REQUIRE(skelfit_v1_cloud_write(n, out.c_str(), nullptr, &err) == SKELFIT_OK);
    skelfit_cloud* back = nullptr;
    REQUIRE(skelfit_v1_cloud_load(out.c_str(), "ply", &back, &err) == SKELFIT_OK);
    CHECK(std::equal(skelfit_v1_cloud_data(n), skelfit_v1_cloud_data(n) + 9, skelfit_v1_cloud_data(back)));

    for (auto* h : {c, n, sub, back}) skelfit_v1_cloud_free(h);
    skelfit_v1_cloud_free(nullptr);
  }

  TEST_CASE("error reporting") {
    TempDir dir;
    skelfit_cloud* c = nullptr;
    skelfit_error err;
    CHECK(skelfit_v1_cloud_load(dir.file("missing.xyz").c_str(), nullptr, &c, &err) == SKELFIT_ERROR_IO);
    CHECK(c == nullptr);
    const auto bad = dir.write("bad.xyz", "0 0 0\n1 x 0\n");
    CHECK(skelfit_v1_cloud_load(bad.c_str(), nullptr, &c, &err) == SKELFIT_ERROR_PARSE);
    CHECK(err.line == 2);
    const auto empty = dir.write("empty.xyz", "");
    CHECK(skelfit_v1_cloud_load(empty.c_str(), nullptr, &c, &err) == SKELFIT_ERROR_EMPTY_INPUT);
    CHECK(skelfit_v1_cloud_from_xyz(nullptr, 0, &c, &err) == SKELFIT_ERROR_EMPTY_INPUT);
    // A NULL error pointer is allowed.
    CHECK(skelfit_v1_cloud_load(bad.c_str(), nullptr, &c, nullptr) == SKELFIT_ERROR_PARSE);

    const double same[6] = {1, 1, 1, 1, 1, 1};
    REQUIRE(skelfit_v1_cloud_from_xyz(same, 2, &c, &err) == SKELFIT_OK);
    skelfit_cloud* n = nullptr;
    double center[3];
    double scale;
    CHECK(skelfit_v1_cloud_normalize(c, &n, center, &scale, &err) == SKELFIT_ERROR_DEGENERATE);
    CHECK(skelfit_v1_cloud_add_noise(c, -1.0, 0, &n, &err) == SKELFIT_ERROR_ARGUMENT);
    skelfit_v1_cloud_free(c);
  }

  TEST_CASE("fit through the boundary") {
    const auto shape = make_segment(128, 0.01, 3);
    skelfit_cloud* c = cloud_handle(shape.cloud.points());
    skelfit_fit* f = nullptr;
    skelfit_error err;
    const char* config = R"({"k": 2, "total_budget": 32, "iterations": 10})";
    REQUIRE(skelfit_v1_fit_run(c, config, &f, &err) == SKELFIT_OK);
    CHECK(skelfit_v1_fit_keypoint_count(f) == 2);
    CHECK(skelfit_v1_fit_edge_count(f) == 1);
    CHECK(skelfit_v1_fit_history_length(f) == 10);
    CHECK(skelfit_v1_fit_best_iteration(f) < 10);
    CHECK(skelfit_v1_fit_reconstruction_offsets(f)[1] == skelfit_v1_fit_reconstruction_size(f));
    const double a = skelfit_v1_fit_activations(f)[0];
    CHECK((a > 0.0 && a < 1.0));

    FitConfig cfg;
    cfg.k = 2;
    cfg.total_budget = 32;
    cfg.iterations = 10;
    const auto ref = fit(shape.cloud, cfg);
    CHECK(std::equal(ref.history.begin(), ref.history.end(),
                     reinterpret_cast<const std::array<double, 4>*>(skelfit_v1_fit_history(f)),
                     [](const LossBreakdown& l, const std::array<double, 4>& row) {
                       return l.total == row[0] && l.fidelity == row[1] && l.coverage == row[2] &&
                              l.penalty == row[3];
                     }));
    const auto kp = flatten(ref.skeleton.keypoints);
    CHECK(std::equal(kp.begin(), kp.end(), skelfit_v1_fit_keypoints(f)));

    char* report = nullptr;
    const double center[3] = {1, 2, 3};
    REQUIRE(skelfit_v1_fit_report_json(f, center, 2.0, &report, &err) == SKELFIT_OK);
    const auto j = nlohmann::json::parse(report);
    CHECK(j["skeleton"]["keypoints"][0][1].get<double>() == ref.skeleton.keypoints[0].y * 2.0 + 2.0);
    skelfit_v1_string_free(report);

    char* skel = nullptr;
    REQUIRE(skelfit_v1_fit_skeleton_json(f, nullptr, 1.0, &skel, &err) == SKELFIT_OK);
    TempDir dir;
    const auto path = dir.write("s.json", skel);
    skelfit_v1_string_free(skel);
    skelfit_skeleton* s = nullptr;
    REQUIRE(skelfit_v1_skeleton_load(path.c_str(), &s, &err) == SKELFIT_OK);
    CHECK(skelfit_v1_skeleton_keypoint_count(s) == 2);
    CHECK(std::equal(kp.begin(), kp.end(), skelfit_v1_skeleton_keypoints(s)));

    char* hist = nullptr;
    REQUIRE(skelfit_v1_distance_histogram(c, s, 100, 10, 0, &hist, &err) == SKELFIT_OK);
    const auto hj = nlohmann::json::parse(hist);
    std::size_t total = 0;
    for (const auto& v : hj["series"]["bbox"]["counts"]) total += v.get<std::size_t>();
    CHECK(total == 128);
    skelfit_v1_string_free(hist);

    skelfit_v1_skeleton_free(s);
    skelfit_v1_fit_free(f);

    CHECK(skelfit_v1_fit_run(c, R"({"k": 1})", &f, &err) == SKELFIT_ERROR_ARGUMENT);
    CHECK(skelfit_v1_fit_run(c, "{", &f, &err) == SKELFIT_ERROR_PARSE);
    skelfit_v1_cloud_free(c);
  }

  TEST_CASE("divergence still returns the partial fit") {
    const auto shape = make_segment(64, 0.01, 3);
    skelfit_cloud* c = cloud_handle(shape.cloud.points());
    skelfit_fit* f = nullptr;
    skelfit_error err;
    CHECK(skelfit_v1_fit_run(c, R"({"k": 2, "total_budget": 16, "iterations": 40, "learning_rate": 1e300})", &f,
                             &err) == SKELFIT_ERROR_DIVERGENCE);
    REQUIRE(f != nullptr);
    CHECK(skelfit_v1_fit_history_length(f) < 40);
    skelfit_v1_fit_free(f);
    skelfit_v1_cloud_free(c);
  }

  TEST_CASE("metrics through the boundary") {
    const double anno_xyz[9] = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    const int ids[3] = {0, 1, 2};
    skelfit_annotations* anno = nullptr;
    skelfit_error err;
    REQUIRE(skelfit_v1_annotations_from(anno_xyz, ids, 3, &anno, &err) == SKELFIT_OK);
    CHECK(skelfit_v1_annotations_size(anno) == 3);

    const double pred[9] = {0.05, 0, 0, 1, 0.05, 0, 5, 5, 5};
    std::size_t counts[3];
    double iou = -1;
    REQUIRE(skelfit_v1_miou(pred, 3, anno, 0.1, SKELFIT_MATCH_GREEDY, counts, &iou, &err) == SKELFIT_OK);
    CHECK(iou == 0.5);
    CHECK(counts[0] == 2);
    CHECK(skelfit_v1_miou(pred, 3, anno, 0.0, SKELFIT_MATCH_GREEDY, nullptr, &iou, &err) == SKELFIT_ERROR_ARGUMENT);
    CHECK(skelfit_v1_miou(pred, 3, anno, 0.1, 7, nullptr, &iou, &err) == SKELFIT_ERROR_ARGUMENT);

    double das[3];
    REQUIRE(skelfit_v1_das(anno_xyz, 3, anno, anno_xyz, 3, anno, das, &err) == SKELFIT_OK);
    CHECK(das[2] == 1.0);
    CHECK(skelfit_v1_das(anno_xyz, 3, anno, anno_xyz, 2, anno, das, &err) == SKELFIT_ERROR_SHAPE);

    const double orig[6] = {0, 0, 0, 0, 0, 0};
    const double pert[6] = {0.1, 0, 0, 0.05, 0, 0};
    double score = -1;
    REQUIRE(skelfit_v1_repeatability(orig, 2, pert, 2, 1.0, 0.1, &score, &err) == SKELFIT_OK);
    CHECK(score == 0.5);
    CHECK(skelfit_v1_repeatability(orig, 2, pert, 1, 1.0, 0.1, &score, &err) == SKELFIT_ERROR_SHAPE);

    TempDir dir;
    const auto path = dir.write("a.json", R"([{"xyz": [0, 0, 0], "semantic_id": 4}])");
    skelfit_annotations* loaded = nullptr;
    REQUIRE(skelfit_v1_annotations_load(path.c_str(), &loaded, &err) == SKELFIT_OK);
    CHECK(skelfit_v1_annotations_size(loaded) == 1);
    skelfit_v1_annotations_free(loaded);
    skelfit_v1_annotations_free(anno);
  }
}
