#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace s2 {

/// Mixes one 64-bit value through the splitmix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a master seed and up to two stream indices.
/// Used to hand every experiment trial its own independent, reproducible
/// random stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return splitmix64(splitmix64(master ^ 0x5851f42d4c957f2dULL) + splitmix64(a) +
                    0x9e3779b97f4a7c15ULL * (b + 1));
}

/// Seedable random source with explicit, platform-independent samplers.
/// All distributions are implemented here (not via std:: distribution
/// objects) so that a seed reproduces the same stream everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Rejection sampling, unbiased.
  std::uint64_t integer(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("Rng::integer: bound must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % bound;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// Draws k distinct indices uniformly from {0, ..., n-1} (Floyd's method)
/// and returns them sorted ascending.
inline std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n,
                                                             std::uint64_t k,
                                                             Rng& rng) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<bool> taken(n, false);
  std::vector<std::uint64_t> out;
  out.reserve(k);
  for (std::uint64_t j = n - k; j < n; ++j) {
    const std::uint64_t t = rng.integer(j + 1);
    if (taken[t]) {
      taken[j] = true;
      out.push_back(j);
    } else {
      taken[t] = true;
      out.push_back(t);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace s2
