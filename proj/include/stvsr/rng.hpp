#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace stvsr {

// All randomness in the pipeline flows from one root seed, expanded into
// independent streams by label. Uniform/normal draws are implemented on top
// of the raw mt19937_64 word stream so results do not depend on the standard
// library's distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; draws are consumed in pairs and cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

// Derive the stream for a named subsystem (e.g. "degrade", "init.vnet").
inline RngStream derive_stream(std::uint64_t root_seed, std::string_view label) {
  return RngStream(detail::splitmix64(root_seed ^ detail::fnv1a(label)));
}

// Extra integer salt for per-clip / per-step streams.
inline RngStream derive_stream(std::uint64_t root_seed, std::string_view label,
                               std::uint64_t salt) {
  return RngStream(
      detail::splitmix64(detail::splitmix64(root_seed ^ detail::fnv1a(label)) + salt));
}

}  // namespace stvsr
