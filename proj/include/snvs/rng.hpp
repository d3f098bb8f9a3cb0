#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

#include "snvs/normal.hpp"

namespace snvs {

namespace detail {
// SplitMix64 finalizer; decorrelates substream seeds derived from one master.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Seedable random source with the distributions the samplers need.
/// All algorithms are fixed here rather than delegated to
/// implementation-defined std:: distributions, so a (seed, stream)
/// pair yields one bit-exact draw sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(detail::mix_seed(seed, stream));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on (0,1); never returns an exact endpoint.
  double uniform() {
    while (true) {
      const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return norm_quantile(uniform()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential() { return -std::log(uniform()); }

  /// Gamma(shape, rate) via Marsaglia-Tsang; shape < 1 boosted.
  double gamma(double shape, double rate) {
    if (shape <= 0.0 || rate <= 0.0)
      throw std::invalid_argument("Rng::gamma: shape and rate must be > 0");
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  std::uint64_t uniform_int(std::uint64_t n) {
    // rejection to avoid modulo bias
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  /// Index draw from unnormalized nonnegative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      u -= weights[k];
      if (u <= 0.0) return k;
    }
    return weights.size() - 1;
  }

  /// Exact draw from N(mean, var) restricted to (lower, upper).
  /// Inverse-CDF when the region holds at least 1e-10 probability mass,
  /// Robert (1995) exponential rejection in extreme tails.
  double truncated_normal(double mean, double var, double lower, double upper) {
    if (!(var > 0.0)) throw std::invalid_argument("truncated_normal: var must be > 0");
    if (!(lower < upper)) throw std::invalid_argument("truncated_normal: need lower < upper");
    const double sd = std::sqrt(var);
    const double a = (lower - mean) / sd;
    const double b = (upper - mean) / sd;
    return mean + sd * std_truncated_normal(a, b);
  }

  /// Standardized version on (a, b) with mean 0, variance 1.
  double std_truncated_normal(double a, double b) {
    if (a > 0.0) return -std_truncated_normal(-b, -a);  // keep the mass on the left
    const double pa = norm_cdf(a);
    const double pb = norm_cdf(b);
    const double mass = pb - pa;
    if (mass >= 1e-10) {
      const double u = pa + uniform() * mass;
      double x = norm_quantile(u);
      if (x < a) x = a;
      if (x > b) x = b;
      return x;
    }
    // Tiny mass. With a <= 0 this is either a sliver deep in the left tail
    // or a very narrow interval; pick the proposal with bounded reject rate.
    const double lo = -b;
    if (std::isinf(a) || (b <= 0.0 && (b - a) * lo >= 1.0)) {
      // Robert's one-sided exponential proposal at the near edge, mirrored.
      const double lambda = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
      while (true) {
        const double z = lo + exponential() / lambda;
        if (z > -a) continue;
        const double diff = z - lambda;
        if (uniform() <= std::exp(-0.5 * diff * diff)) return -z;
      }
    }
    // Narrow interval: tilted uniform proposal.
    const double m2 = (b >= 0.0) ? 0.0 : b * b;
    while (true) {
      const double z = a + (b - a) * uniform();
      if (uniform() <= std::exp(-0.5 * (z * z - m2))) return z;
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace snvs
