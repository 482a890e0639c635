#include <doctest.h>

#include <cmath>

#include "instances.hpp"
#include "shapes.hpp"
#include "skelfit/error.hpp"
#include "skelfit/skeleton.hpp"

using namespace skelfit;
using namespace skelfit::testing;

namespace {

Skeleton line_skeleton(std::vector<Vec3> keypoints) { return Skeleton::from_keypoints(std::move(keypoints)); }

}  // namespace

TEST_SUITE("skeleton") {
  TEST_CASE("edge enumeration") {
    CHECK(enumerate_edges(2) == std::vector<Edge>{{0, 1}});
    CHECK(enumerate_edges(3) == std::vector<Edge>{{0, 1}, {0, 2}, {1, 2}});
    CHECK(enumerate_edges(10).size() == 45);
    for (std::size_t k = 2; k < 12; ++k) {
      const auto edges = enumerate_edges(k);
      CHECK(edges.size() == k * (k - 1) / 2);
      CHECK(edges == enumerate_edges(k));
      for (std::size_t i = 0; i < edges.size(); ++i) {
        CHECK(edges[i].u < edges[i].v);
        if (i > 0) {
          CHECK((edges[i - 1].u < edges[i].u ||
                 (edges[i - 1].u == edges[i].u && edges[i - 1].v < edges[i].v)));
        }
      }
    }
    CHECK_THROWS_AS(enumerate_edges(1), Error);
    CHECK_THROWS_AS(enumerate_edges(0), Error);
  }

  TEST_CASE("plan proportional to edge length") {
    // Keypoints 0 -> 1 has length 1, 0 -> 2 has length 2 along x; edge 1-2 is
    // collinear and short. Use a two-edge configuration via k = 3 with a
    // zero-length third edge to isolate the proportion.
    const auto sk = line_skeleton({{0, 0, 0}, {1, 0, 0}, {1, 0, 0}});
    const auto plan = plan_sampling(sk, 300);
    // lengths 1, 1, 0 -> 150, 150, 1
    CHECK(plan.counts == std::vector<std::size_t>{150, 150, 1});

    const auto sk2 = line_skeleton({{0, 0, 0}, {0, 0, 0}, {3, 0, 0}});
    // lengths 0, 3, 3
    CHECK(plan_sampling(sk2, 100).counts == std::vector<std::size_t>{1, 50, 50});
  }

  TEST_CASE("lengths 1 and 2 split 300 as 100 and 200") {
    // Edges (0,1), (0,2), (1,2) with lengths 1, 2 and 1 would not isolate
    // the pair, so place keypoint 2 such that edge (1,2) has length 0.
    const auto sk = line_skeleton({{0, 0, 0}, {2, 0, 0}, {2, 0, 0}});
    const auto plan = plan_sampling(sk, 300);
    CHECK(plan.counts == std::vector<std::size_t>{150, 150, 1});
    const Skeleton two{{{0, 0, 0}, {1, 0, 0}, {0, 2, 0}}, {{0, 1}, {0, 2}}};
    CHECK(plan_sampling(two, 300).counts == std::vector<std::size_t>{100, 200});
  }

  TEST_CASE("three equal edges with budget 100") {
    const double h = std::sqrt(3.0) / 2.0;
    const auto sk = line_skeleton({{0, 0, 0}, {1, 0, 0}, {0.5, h, 0}});
    const auto plan = plan_sampling(sk, 100);
    const auto [lo, hi] = std::minmax_element(plan.counts.begin(), plan.counts.end());
    CHECK(*hi - *lo <= 1);
    const long diff = long(plan.total()) - 100;
    CHECK(std::abs(diff) <= long(sk.edges.size()));
    // Direct computation of the rounding rule.
    for (std::size_t i = 0; i < 3; ++i) {
      const double share = 100.0 * sk.edge_length(i) /
                           (sk.edge_length(0) + sk.edge_length(1) + sk.edge_length(2));
      CHECK(plan.counts[i] == std::size_t(std::max(1.0, std::round(share))));
    }
  }

  TEST_CASE("all keypoints coincident") {
    const auto sk = line_skeleton({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
    CHECK(plan_sampling(sk, 10).counts == std::vector<std::size_t>{1, 1, 1});
  }

  TEST_CASE("plan total stays within the edge count of the budget") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const std::size_t k = 2 + seed % 8;
      const auto sk = Skeleton::from_keypoints(random_points(k, 1.0, seed));
      const std::size_t budget = sk.edges.size() + seed * 7;
      const auto plan = plan_sampling(sk, budget);
      for (const auto n : plan.counts) CHECK(n >= 1);
      const long diff = long(plan.total()) - long(budget);
      CHECK(std::abs(diff) <= long(sk.edges.size()));
    }
  }

  TEST_CASE("plan budget below the edge count") {
    const auto sk = Skeleton::from_keypoints(random_points(4, 1.0, 1));
    CHECK_THROWS_AS(plan_sampling(sk, 5), Error);
    CHECK_NOTHROW(plan_sampling(sk, 6));
  }

  TEST_CASE("midpoint sampling") {
    const Skeleton two{{{0, 0, 0}, {1, 0, 0}}, {{0, 1}}};
    const auto s = sample_edges(two, SamplingPlan{2, {2}});
    REQUIRE(s.size() == 2);
    CHECK(s.points()[0] == Vec3{0.25, 0, 0});
    CHECK(s.points()[1] == Vec3{0.75, 0, 0});
    const auto one = sample_edges(two, SamplingPlan{1, {1}});
    CHECK(one.points()[0] == Vec3{0.5, 0, 0});
  }

  TEST_CASE("samples lie on their segment with spacing L / n") {
    const auto sk = Skeleton::from_keypoints(random_points(5, 1.0, 21));
    const auto plan = plan_sampling(sk, 200);
    const auto s = sample_edges(sk, plan);
    CHECK(s.edge_count() == sk.edges.size());
    for (std::size_t e = 0; e < sk.edges.size(); ++e) {
      const Vec3 a = sk.keypoints[sk.edges[e].u];
      const Vec3 b = sk.keypoints[sk.edges[e].v];
      const double len = distance(a, b);
      const auto pts = s.edge(e);
      REQUIRE(pts.size() == plan.counts[e]);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        // collinear: |ap| + |pb| = |ab|
        CHECK(distance(a, pts[i]) + distance(pts[i], b) == doctest::Approx(len).epsilon(1e-12));
        if (i > 0) CHECK(distance(pts[i - 1], pts[i]) == doctest::Approx(len / pts.size()).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("samples move affinely with a keypoint") {
    auto kp = random_points(4, 1.0, 5);
    const auto sk = Skeleton::from_keypoints(kp);
    const auto plan = plan_sampling(sk, 120);
    const auto before = sample_edges(sk, plan);
    const Vec3 delta{0.01, -0.02, 0.03};
    kp[1] += delta;
    const auto after = sample_edges(Skeleton::from_keypoints(kp), plan);
    for (std::size_t e = 0; e < sk.edges.size(); ++e) {
      const auto n = plan.counts[e];
      for (std::size_t s = 0; s < n; ++s) {
        const double t = sample_parameter(s, n);
        Vec3 expected{};
        if (sk.edges[e].u == 1) expected = (1.0 - t) * delta;
        if (sk.edges[e].v == 1) expected = t * delta;
        const Vec3 moved = after.edge(e)[s] - before.edge(e)[s];
        for (std::size_t a = 0; a < 3; ++a) CHECK(moved[a] == doctest::Approx(expected[a]).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("apply_offsets") {
    const auto sk = Skeleton::from_keypoints(random_points(3, 1.0, 2));
    const auto plan = plan_sampling(sk, 30);
    const auto raw = sample_edges(sk, plan);
    CHECK(apply_offsets(raw, OffsetTable::zeros(plan)) == raw);

    const Skeleton two{{{0, 0, 0}, {1, 0, 0}}, {{0, 1}}};
    const auto single = sample_edges(two, SamplingPlan{1, {1}});
    auto off = OffsetTable::zeros(SamplingPlan{1, {1}});
    off.points()[0] = {0, 0.1, 0};
    CHECK(apply_offsets(single, off).points()[0] == Vec3{0.5, 0.1, 0});

    // Additivity and exact inverse.
    auto b = OffsetTable::zeros(plan);
    const auto noise = random_points(b.size(), 0.1, 3);
    for (std::size_t i = 0; i < b.size(); ++i) b.points()[i] = noise[i];
    const auto moved = apply_offsets(raw, b);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(distance(moved.points()[i], raw.points()[i]) ==
            doctest::Approx(norm(b.points()[i])).epsilon(1e-12));
    }
    auto neg = b;
    for (auto& p : neg.points()) p = -1.0 * p;
    const auto restored = apply_offsets(apply_offsets(raw, OffsetTable::zeros(plan)), OffsetTable::zeros(plan));
    CHECK(restored == raw);
    const auto round = apply_offsets(moved, neg);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      for (std::size_t a = 0; a < 3; ++a) CHECK(round.points()[i][a] == doctest::Approx(raw.points()[i][a]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(apply_offsets(raw, OffsetTable::zeros(SamplingPlan{3, {1, 1, 1}})), Error);
  }

  TEST_CASE("offset penalty") {
    const auto zero = OffsetTable::zeros(SamplingPlan{4, {2, 2}});
    const auto p0 = offset_penalty(zero, 1.0);
    CHECK(p0.value == 0.0);
    for (const auto& g : p0.gradient.points()) CHECK(g == Vec3{});

    auto one = OffsetTable::zeros(SamplingPlan{1, {1}});
    one.points()[0] = {0, 0.3, 0.4};
    const auto p1 = offset_penalty(one, 1.0);
    CHECK(p1.value == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p1.gradient.points()[0].y == doctest::Approx(0.6));
    CHECK(p1.gradient.points()[0].z == doctest::Approx(0.8));
    CHECK(p1.gradient.points()[0].x == 0.0);
  }
}
