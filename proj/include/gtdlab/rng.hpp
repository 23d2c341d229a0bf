#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gtdlab {

// 64-bit FNV-1a. Used for all seed derivation so that derived RNG streams are
// stable across runs and platforms.
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {
inline uint64_t hash_feed(uint64_t h, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));  // little-endian
  return fnv1a64(b, 8, h);
}
inline uint64_t hash_feed(uint64_t h, std::string_view s) { return fnv1a64(s.data(), s.size(), h); }
}  // namespace detail

/// Stable seed derivation: FNV-1a over the little-endian bytes of integer parts
/// and the raw bytes of string tags, in argument order.
template <typename... Parts>
uint64_t derive_seed(Parts... parts) {
  uint64_t h = 0xcbf29ce484222325ull;
  ((h = detail::hash_feed(h, parts)), ...);
  return h;
}

/// Deterministic RNG. All transforms (uniform, normal, laplace, shuffle) are
/// implemented explicitly instead of via std:: distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  uint64_t uniform_int(uint64_t n) {
    // rejection sampling to avoid modulo bias
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (no cached spare).
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Laplace(0, b) via inverse CDF. b = 0 yields exactly 0.
  double laplace(double b) {
    if (b == 0.0) return 0.0;
    double u = uniform() - 0.5;
    double s = u < 0 ? -1.0 : 1.0;
    return -b * s * std::log(1.0 - 2.0 * std::fabs(u));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace gtdlab
