#pragma once

#include <cstdint>
#include <random>

#include "wisa/numcore/tensor.hpp"

namespace wisa::numcore {

/// Seeded generator with platform-independent draws.
///
/// The standard distributions are implementation-defined, so uniform and
/// normal variates are derived here directly from the 64-bit engine output;
/// identical seeds give bit-identical streams on every toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Tensor normal_tensor(Shape shape, double stddev = 1.0);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  // Independent child stream; depends only on (seed, stream).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace wisa::numcore
