#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "bzsl/common.hpp"

namespace bzsl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives an independent substream key from (seed, tags). Streams keyed this
// way can be consumed in any order with identical output.
inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t k = splitmix64(seed ^ 0x5851F42D4C957F2DULL);
  k = splitmix64(k ^ splitmix64(a));
  k = splitmix64(k ^ splitmix64(b ^ 0xD1342543DE82EF95ULL));
  k = splitmix64(k ^ splitmix64(c ^ 0xA0761D6478BD642FULL));
  return k;
}

// mt19937_64 engine with hand-rolled transforms. The standard pins the engine
// sequence but not the library distributions, so normal/gamma are implemented
// here for bit-reproducible output across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double a = 2.0 * kPi * uniform();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Marsaglia-Tsang; the alpha < 1 case boosts through alpha + 1.
  double gamma(double alpha, double scale = 1.0) {
    if (!(alpha > 0.0) || !(scale > 0.0)) {
      throw NumericalError("gamma sample requires positive shape and scale");
    }
    if (alpha < 1.0) {
      const double u = uniform();
      return gamma(alpha + 1.0, scale) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      const double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v * scale;
      }
    }
  }

  double chi_squared(double dof) { return gamma(0.5 * dof, 2.0); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bzsl
