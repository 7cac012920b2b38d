#ifndef ACV_RNG_HPP_
#define ACV_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace acv {

// PCG32 (Melissa O'Neill, pcg-random.org, minimal variant). Used everywhere a
// random draw is needed so that streams are reproducible across platforms;
// std::normal_distribution and friends are implementation-defined and unusable
// for seeded determinism.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted = std::uint32_t(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = std::uint32_t(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    return (std::uint64_t(next_u32()) << 32) | next_u32();
  }

  // Uniform in [0, 1), 32 bits of resolution.
  double uniform() {
    return double(next_u32()) * (1.0 / 4294967296.0);
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // Box-Muller with a cached second draw; deterministic call sequence.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 1e-12);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Integer in [0, n).
  std::uint32_t below(std::uint32_t n) {
    // Lemire-style rejection-free enough for non-cryptographic use; keep the
    // simple multiply-shift which is unbiased to ~2^-32.
    return std::uint32_t((std::uint64_t(next_u32()) * n) >> 32);
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace acv

#endif  // ACV_RNG_HPP_
