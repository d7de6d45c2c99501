#pragma once

#include <cstdint>

#include "dgmn/tensor.hpp"

namespace dgmn {

/// SplitMix64 counter generator.
///
/// state += 0x9E3779B97F4A7C15; z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31).
/// Uniform doubles take the top 53 bits. Normals use Box-Muller over two
/// uniforms (no cached spare), so every draw consumes exactly two words.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }
  // Normal resampled until it lands in [-2 std, 2 std].
  double truncated_normal(double std);
  std::uint64_t below(std::uint64_t n);  // [0, n)

  Tensor uniform_tensor(Shape shape, double lo, double hi);
  Tensor normal_tensor(Shape shape, double std);
  Tensor truncated_normal_tensor(Shape shape, double std);

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace dgmn
