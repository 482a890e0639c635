#include <doctest.h>

#include <cmath>

#include "shapes.hpp"
#include "skelfit/kdtree.hpp"

using namespace skelfit;
using namespace skelfit::testing;

TEST_SUITE("kdtree") {
  TEST_CASE("matches an exhaustive scan exactly") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto pts = random_points(1 + 7 * seed, 1.0, seed);
      const KdTree tree(pts);
      for (const auto& q : random_points(25, 1.5, seed + 500)) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pts.size(); ++i) {
          if (squared_distance(q, pts[i]) < squared_distance(q, pts[best])) best = i;
        }
        const auto r = tree.nearest(q);
        REQUIRE(r.index == best);
        REQUIRE(r.distance == std::sqrt(squared_distance(q, pts[best])));
        REQUIRE(tree.nearest_squared(q).squared_distance == squared_distance(q, pts[best]));
      }
    }
  }

  TEST_CASE("exact ties resolve to the lowest index") {
    // Many coincident and equidistant points on a lattice.
    std::vector<Vec3> pts;
    for (int rep = 0; rep < 3; ++rep) {
      for (int x = 0; x < 4; ++x) {
        for (int y = 0; y < 4; ++y) pts.push_back({double(x), double(y), 0.0});
      }
    }
    const KdTree tree(pts);
    for (int x = 0; x < 4; ++x) {
      for (int y = 0; y < 4; ++y) {
        CHECK(tree.nearest({double(x), double(y), 0.0}).index == std::size_t(4 * x + y));
        // Midway between (x, y) and (x + 1, y): the lower index wins.
        if (x < 3) CHECK(tree.nearest({x + 0.5, double(y), 0.0}).index == std::size_t(4 * x + y));
      }
    }
  }

  TEST_CASE("empty tree") {
    const KdTree tree(std::span<const Vec3>{});
    CHECK(tree.empty());
    CHECK_THROWS(tree.nearest({0, 0, 0}));
  }
}
