#include "tokengray/rng.hpp"

#include <cmath>

namespace tg {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(RngStream stream) {
  std::uint64_t x = stream.seed;
  // Fold the stream id in after the seed so (seed, id) pairs decorrelate.
  std::uint64_t y = stream.stream_id * 0xD2B74407B1CE6E93ULL + 0x8BB84B93962EACC9ULL;
  for (int i = 0; i < 4; ++i) {
    // Sequence the two generators explicitly; evaluation order inside one
    // expression would be compiler-dependent.
    std::uint64_t a = splitmix64(x);
    std::uint64_t b = splitmix64(y);
    s_[i] = a ^ b;
  }
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] uniforms; fully deterministic across platforms.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling to avoid modulo bias.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

Matrix random_gaussian(int rows, int cols, RngStream stream) {
  Matrix m(rows, cols);
  Rng rng(stream);
  for (double& v : m.raw()) v = rng.gaussian();
  return m;
}

}  // namespace tg
