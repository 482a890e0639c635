#include <doctest.h>

#include <cmath>
#include <set>

#include "skelfit/geometry.hpp"
#include "skelfit/random.hpp"

using namespace skelfit;

TEST_SUITE("geometry") {
  TEST_CASE("vector arithmetic") {
    const Vec3 a{1.0, 2.0, 3.0};
    const Vec3 b{-1.0, 0.5, 2.0};
    CHECK(a + b == Vec3{0.0, 2.5, 5.0});
    CHECK(a - b == Vec3{2.0, 1.5, 1.0});
    CHECK(2.0 * a == Vec3{2.0, 4.0, 6.0});
    CHECK(dot(a, b) == doctest::Approx(6.0));
    CHECK(squared_distance(a, b) == doctest::Approx(7.25));
    CHECK(distance(Vec3{0, 0, 0}, Vec3{0, 3, 4}) == 5.0);
    CHECK(is_finite(a));
    CHECK_FALSE(is_finite(Vec3{0.0, NAN, 0.0}));
    CHECK_FALSE(is_finite(Vec3{INFINITY, 0.0, 0.0}));
  }
}

TEST_SUITE("random") {
  TEST_CASE("draws are pure functions of seed, stream and counter") {
    const CounterRng a(42, 7);
    const CounterRng b(42, 7);
    for (std::uint64_t c = 0; c < 100; ++c) CHECK(a.bits(c) == b.bits(c));
    CHECK(CounterRng(42, 8).bits(0) != a.bits(0));
    CHECK(CounterRng(43, 7).bits(0) != a.bits(0));
    CHECK(a.split(1).bits(0) == b.split(1).bits(0));
    CHECK(a.split(1).bits(0) != a.split(2).bits(0));
  }

  TEST_CASE("uniform lies in [0, 1) with plausible moments") {
    const CounterRng rng(1);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform(i);
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  }

  TEST_CASE("normal has zero mean and unit variance") {
    const CounterRng rng(2);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal(i);
      REQUIRE(std::isfinite(z));
      sum += z;
      sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
  }

  TEST_CASE("below stays in range and covers it") {
    const CounterRng rng(3);
    std::uint64_t counter = 0;
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
      const auto v = rng.below(7, counter);
      REQUIRE(v < 7);
      seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK(counter >= 1000);
  }
}
