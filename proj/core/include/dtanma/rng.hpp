#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace dtanma {

// Self-contained counter-free PRNG stack (xoshiro256++ seeded through
// splitmix64) with hand-rolled distribution draws. Keeping the whole draw
// path in-project makes sampler output bit-stable across standard library
// versions and trivially serializable for --resume.

inline std::uint64_t splitmix64_next(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64_next(sm);
  }

  // Independent stream per chain: decorrelate the seed by hashing in the
  // chain index before expansion.
  static Rng for_chain(std::uint64_t seed, std::uint64_t chain) {
    std::uint64_t sm = seed;
    std::uint64_t mixed = splitmix64_next(sm) ^ (0x517cc1b727220a95ULL * (chain + 1));
    return Rng(mixed);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1); never returns an endpoint.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; stateless (two uniforms per draw) so the
  // stream position is a pure function of the number of calls.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Marsaglia-Tsang; shape-only (unit scale).
  double gamma(double shape) {
    if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

  // Sequential Bernoulli sum; exact and deterministic for the group sizes
  // seen in DTA data.
  long binomial(long n, double p) {
    if (n < 0) throw std::invalid_argument("binomial: n must be >= 0");
    if (p <= 0.0) return 0;
    if (p >= 1.0) return n;
    long x = 0;
    for (long i = 0; i < n; ++i)
      if (uniform() < p) ++x;
    return x;
  }

  State state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  State state_{};
};

}  // namespace dtanma
