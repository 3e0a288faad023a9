#pragma once

#include <cstdint>

#include "scl/tensor.hpp"

namespace scl {

// xoshiro256** with splitmix64 seeding. Self-contained so streams are
// identical regardless of standard-library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1), 24-bit resolution.
  float uniform();
  // Standard normal via Marsaglia polar.
  float normal();
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);

  Tensor normal_tensor(std::vector<int64_t> shape, float mean = 0.0f, float stddev = 1.0f);

  // Independent stream for a named purpose under the same run seed.
  static Rng derive(uint64_t seed, uint64_t stream_tag);

 private:
  uint64_t state_[4];
  bool has_spare_ = false;
  float spare_ = 0.0f;
};

}  // namespace scl
