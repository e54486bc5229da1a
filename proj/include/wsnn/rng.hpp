#pragma once

#include <cmath>
#include <cstdint>
#include <cstddef>

namespace wsnn {

// Deterministic PRNG with a pinned algorithm (xoshiro256++ seeded through
// splitmix64). All randomness in the library flows through this type so that
// a run is reproducible bit-for-bit across platforms and build flags; the
// standard library engines are specified but <random> distributions are not,
// hence the hand-rolled uniform/normal transforms below.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    // splitmix64 expansion of the user seed into the 256-bit state.
    uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
    have_gauss_ = false;
  }

  // Derive an independent stream, e.g. one per dataset item or per layer.
  // Mixing the salt through splitmix64 keeps nearby (seed, salt) pairs
  // decorrelated.
  Rng derive(uint64_t salt) const {
    uint64_t x = s_[0] ^ (salt + 0x9e3779b97f4a7c15ull);
    uint64_t mixed = splitmix64(x);
    return Rng(mixed ^ s_[2]);
  }

  // xoshiro256++ next().
  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1): 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Multiply-shift bounded generation;
  // the tiny modulo bias of the naive approach is avoided by rejection.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller (the cached second value keeps the cost
  // at one transcendental pair per two samples).
  double normal() {
    if (have_gauss_) {
      have_gauss_ = false;
      return gauss_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    gauss_ = r * std::sin(theta);
    have_gauss_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Bernoulli(p).
  bool bernoulli(double p) { return uniform() < p; }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  uint64_t s_[4] = {};
  double gauss_ = 0.0;
  bool have_gauss_ = false;
};

// In-place Fisher-Yates shuffle of indices [0, n) stored in `idx`.
template <typename IndexT>
void shuffle_indices(IndexT* idx, size_t n, Rng& rng) {
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(i));
    IndexT tmp = idx[i - 1];
    idx[i - 1] = idx[j];
    idx[j] = tmp;
  }
}

}  // namespace wsnn
