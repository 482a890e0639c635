#include "skelfit/random.hpp"

#include <cmath>
#include <numbers>

namespace skelfit {

namespace {

// SplitMix64 finalizer; a bijective avalanche mix.
constexpr std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(mix(seed) ^ (stream * 0xd1b54a32d192ed03ULL))) {}

CounterRng CounterRng::split(std::uint64_t stream) const {
  return CounterRng(FromKey{}, mix(key_ ^ mix(stream + 0x632be59bd9b4e019ULL)));
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  return mix(key_ ^ mix(counter));
}

double CounterRng::uniform(std::uint64_t counter) const {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t counter) const {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t bound, std::uint64_t& counter) const {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  for (;;) {
    const std::uint64_t r = bits(counter++);
    if (r < limit) return r % bound;
  }
}

}  // namespace skelfit
