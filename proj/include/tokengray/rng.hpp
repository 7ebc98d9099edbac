#pragma once

#include <cstdint>

#include "tokengray/matrix.hpp"

namespace tg {

// Identifies a reproducible random sequence. Identical (seed, stream_id)
// yields identical draws on every platform, so concurrent trials use
// distinct stream ids.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
};

// xoshiro256++ seeded through splitmix64; Box-Muller for normals.
// Standard-library distributions are implementation-defined, hence avoided.
class Rng {
 public:
  explicit Rng(RngStream stream);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Standard normal, zero mean, unit variance.
  double gaussian();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix random_gaussian(int rows, int cols, RngStream stream);

}  // namespace tg
