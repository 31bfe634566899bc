#pragma once

#include <cmath>
#include <cstdint>

namespace recdiff {

namespace detail {
inline uint64_t splitmix64(uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: draw i of seed s is a pure hash of (s, i), so
// streams are reproducible across platforms and independent across seeds.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed) {}

  uint64_t next_u64() {
    uint64_t v = detail::splitmix64(seed_ ^ detail::splitmix64(counter_));
    ++counter_;
    return v;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // [0, n)
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; consumes exactly two draws per call (no caching, so stream
  // position is a pure function of call count).
  double gaussian() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  float gaussian_f() { return static_cast<float>(gaussian()); }

  // Independent stream derived from this generator's seed and a stream tag.
  // Does not consume from or perturb this generator.
  Rng split(uint64_t tag) const {
    return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(tag ^ 0xA02BDBF7BB3C0A7ull)));
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace recdiff
