#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include "ggmko/data.hpp"
#include "ggmko/error.hpp"
#include "ggmko/numeric.hpp"

namespace ggmko {

/// Philox4x32-10 counter-based block function (Salmon et al., Random123).
/// Exposed for the known-answer test.
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t m0 = 0xD2511F53u;
  constexpr std::uint32_t m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u;
  constexpr std::uint32_t w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += w0;
    key[1] += w1;
  }
  return ctr;
}

/// Seedable stream of random bits. The pair (seed, stream_id) fully determines
/// the sequence: the seed is the Philox key and the stream id occupies the high
/// half of the 128-bit counter, so streams never overlap.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() {
    if (pos_ >= 4) refill();
    const std::uint64_t hi = block_[pos_];
    const std::uint64_t lo = block_[pos_ + 1];
    pos_ += 2;
    return (hi << 32) | lo;
  }

  /// Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound) by rejection, so results are exact and portable.
  std::uint64_t uniform_index(std::uint64_t bound) {
    if (bound == 0) throw error(errc::invalid_argument, "uniform_index bound must be positive");
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x;
    do x = next_u64();
    while (x >= limit);
    return x % bound;
  }

  /// Box-Muller; the second variate of each pair is cached.
  double standard_normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
        static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                              static_cast<std::uint32_t>(seed_ >> 32)};
    block_ = philox4x32_10(ctr, key);
    ++counter_;
    pos_ = 0;
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
  std::optional<double> spare_;
};

inline double standard_normal(RngStream& rng) { return rng.standard_normal(); }

/// Gamma(shape, 1) by Marsaglia-Tsang squeeze/acceptance; shapes below 1 use
/// the shape boost Gamma(a) = Gamma(a + 1) * U^(1/a).
inline double gamma_variate(RngStream& rng, double shape) {
  if (!(shape > 0.0)) throw error(errc::invalid_argument, "gamma shape must be positive");
  if (shape < 1.0) {
    const double g = gamma_variate(rng, shape + 1.0);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = rng.standard_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double chi_squared(RngStream& rng, double dof) { return 2.0 * gamma_variate(rng, 0.5 * dof); }

inline double student_t(RngStream& rng, long dof) {
  if (dof < 1) throw error(errc::invalid_dof, "degrees of freedom must be at least 1");
  const double z = rng.standard_normal();
  const double nu = static_cast<double>(dof);
  return z / std::sqrt(chi_squared(rng, nu) / nu);
}

/// n rows drawn i.i.d. from N(0, sigma).
inline DataMatrix sample_mvn(RngStream& rng, const SymmetricMatrix& sigma, std::size_t n) {
  const CholeskyFactor factor = cholesky(sigma);
  const std::size_t p = sigma.dim();
  Matrix out(n, p);
  std::vector<double> z(p);
  for (std::size_t r = 0; r < n; ++r) {
    for (auto& v : z) v = rng.standard_normal();
    auto row = out.row(r);
    for (std::size_t i = 0; i < p; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k <= i; ++k) s += factor(i, k) * z[k];
      row[i] = s;
    }
  }
  return DataMatrix(std::move(out));
}

}  // namespace ggmko
