#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>

namespace causil {

/// Seeded random source with platform-independent distributions.
///
/// The standard library fixes the mt19937_64 bit stream but leaves
/// uniform_real_distribution and normal_distribution implementation-defined,
/// which would break byte-identical panels across toolchains. The
/// conversions below are written out so the output depends only on the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer on [lo, hi], rejection-sampled to avoid modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % span);
  }

  /// Box-Muller; the second variate of each pair is kept for the next call.
  double normal(double mean, double stddev) {
    if (spare_) {
      double z = *spare_;
      spare_.reset();
      return mean + stddev * z;
    }
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return mean + stddev * radius * std::cos(angle);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Independent child stream, e.g. one per mechanism.
  Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace causil
