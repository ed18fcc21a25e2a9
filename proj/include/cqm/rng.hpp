#pragma once

// Counter-based Gaussian noise. Every draw is a pure function of
// (seed, trajectory, detector, step), so ensembles are reproducible under
// any parallel schedule.

#include <array>
#include <cmath>
#include <cstdint>

#include "cqm/core.hpp"

namespace cqm {

/// Philox4x32-10 (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;
};

/// Keys the noise of one trajectory. Standard normals come in pairs: one
/// Philox block feeds a Box-Muller transform for steps 2j and 2j+1.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t trajectory, std::uint32_t detector) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        detector_(detector),
        traj_lo_(static_cast<std::uint32_t>(trajectory)),
        traj_hi_(static_cast<std::uint32_t>(trajectory >> 32)) {}

  /// Standard normal pair for steps (2 * pair, 2 * pair + 1).
  std::array<double, 2> normal_pair(std::uint64_t pair) const noexcept {
    const auto w = Philox4x32::generate(
        {static_cast<std::uint32_t>(pair), static_cast<std::uint32_t>(pair >> 32) ^ (detector_ << 8),
         traj_lo_, traj_hi_},
        key_);
    // u1 in (0, 1], u2 in [0, 1), both with 53 random bits.
    const std::uint64_t a = ((std::uint64_t{w[0]} << 32) | w[1]) >> 11;
    const std::uint64_t b = ((std::uint64_t{w[2]} << 32) | w[3]) >> 11;
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    const double u1 = static_cast<double>(a + 1) * scale;
    const double u2 = static_cast<double>(b) * scale;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = two_pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  double normal(std::uint64_t step) const noexcept { return normal_pair(step >> 1)[step & 1]; }

 private:
  Philox4x32::Key key_;
  std::uint32_t detector_;
  std::uint32_t traj_lo_;
  std::uint32_t traj_hi_;
};

/// Pure draw w(seed, trajectory, detector, step) ~ N(0, 1).
inline double standard_normal(std::uint64_t seed, std::uint64_t trajectory, std::uint32_t detector,
                              std::uint64_t step) noexcept {
  return NoiseStream(seed, trajectory, detector).normal(step);
}

}  // namespace cqm
