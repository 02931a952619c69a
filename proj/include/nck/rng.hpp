#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

// Counter-based random streams. Every draw is a pure function of
// (key, counter), so independent workers can own disjoint streams and
// replays are identical no matter how work is scheduled.

namespace nck {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// order-sensitive key derivation (hash-combine with the splitmix finalizer)
inline std::uint64_t key_chain(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ (v + kGolden + (h << 6) + (h >> 2)));
}

// Quantile function of the standard normal. Rational initial guess
// (Acklam's coefficients) polished by one Halley step against erfc,
// giving near machine precision on (0, 1).
inline double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("inverse_normal_cdf: p outside (0,1)");
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley's method on F(x) - p = 0 with F the normal CDF
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double sqrt_2pi = 2.5066282746310005024;
  double e = 0.5 * std::erfc(-x * inv_sqrt2) - p;
  double u = e * sqrt_2pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

struct CounterRng {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  CounterRng() = default;
  explicit CounterRng(std::uint64_t k) : key(k) {}

  // derive a stream key from a seed plus up to three stream indices
  static CounterRng from(std::uint64_t seed, std::uint64_t s1 = 0, std::uint64_t s2 = 0,
                         std::uint64_t s3 = 0) {
    std::uint64_t k = mix64(seed + kGolden);
    k = key_chain(k, s1);
    k = key_chain(k, s2);
    k = key_chain(k, s3);
    return CounterRng(k);
  }

  std::uint64_t next_u64() { return mix64(key + (++counter) * kGolden); }

  // uniform on the open interval (0,1)
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_normal() { return inverse_normal_cdf(next_uniform()); }
};

}  // namespace nck
