#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mtbo {

// splitmix64 step; used to derive independent child seeds from one base seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic child seed for stream `tag` of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t s = base ^ (0x632be59bd9b4e019ULL * (tag + 1));
  return splitmix64(s);
}

inline std::mt19937_64 make_engine(std::uint64_t base, std::uint64_t tag = 0) {
  return std::mt19937_64(derive_seed(base, tag));
}

// Uniform double in (0, 1), never exactly 0 or 1.
inline double uniform01(std::mt19937_64& eng) {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

inline double standard_normal_pdf(double x) {
  return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

// Inverse standard normal CDF. Abramowitz-Stegun 26.2.23 start, polished to
// machine precision with Newton steps on the erfc-based CDF.
inline double standard_normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  const double q = p < 0.5 ? p : 1.0 - p;
  const double t = std::sqrt(-2.0 * std::log(q));
  double x = t - (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + 0.04481 * t));
  if (p < 0.5) x = -x;
  for (int it = 0; it < 4; ++it) {
    const double err = standard_normal_cdf(x) - p;
    const double d = standard_normal_pdf(x);
    if (d <= 0.0) break;
    const double step = err / d;
    x -= step;
    if (std::abs(step) < 1e-14 * (1.0 + std::abs(x))) break;
  }
  return x;
}

// Standard normal draw via inverse CDF, so PRNG and qMC normals share one path.
inline double normal_draw(std::mt19937_64& eng) {
  return standard_normal_quantile(uniform01(eng));
}

}  // namespace mtbo
