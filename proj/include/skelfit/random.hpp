#pragma once

#include <cstdint>

namespace skelfit {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so results never depend on call order or
/// thread scheduling. `split` derives an independent child stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  CounterRng split(std::uint64_t stream) const;

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const;
  /// Standard normal (Box-Muller on two derived uniforms).
  double normal(std::uint64_t counter) const;
  /// Uniform integer in [0, bound) by rejection; bound > 0. `counter` is
  /// advanced past every draw consumed.
  std::uint64_t below(std::uint64_t bound, std::uint64_t& counter) const;

  std::uint64_t key() const { return key_; }

 private:
  struct FromKey {};
  CounterRng(FromKey, std::uint64_t key) : key_(key) {}
  std::uint64_t key_;
};

}  // namespace skelfit
