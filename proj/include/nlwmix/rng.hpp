#pragma once

// Counter-based Philox4x32-10 generator (Salmon et al., SC'11) and the
// Gaussian draws built on it. Every random number is a pure function of
// (seed, stream, step, slot), so ensembles are order-independent and a
// trajectory's noise can be regenerated on demand.

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace nlwmix {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Stream of standard normals addressed by (step, slot). Each Philox block
/// gives two candidate points for Marsaglia's polar method; in the rare case
/// both are rejected the block is redrawn with an attempt index stored in
/// the top byte of the slot word.
class GaussianStream {
 public:
  static constexpr std::uint32_t kMaxSlot = (1u << 24) - 1;

  GaussianStream(std::uint64_t seed, std::uint32_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  [[nodiscard]] std::pair<double, double> normal_pair(std::uint64_t step,
                                                      std::uint32_t slot) const noexcept {
    for (std::uint32_t attempt = 0;; ++attempt) {
      const auto out = Philox4x32::apply({static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                                          (slot & kMaxSlot) | (attempt << 24), stream_},
                                         key_);
      for (int c = 0; c < 2; ++c) {
        const double x = to_symmetric(out[2 * c]);
        const double y = to_symmetric(out[2 * c + 1]);
        const double s = x * x + y * y;
        if (s < 1.0 && s > 0.0) {
          const double scale = std::sqrt(-2.0 * std::log(s) / s);
          return {x * scale, y * scale};
        }
      }
    }
  }

  [[nodiscard]] std::uint64_t seed() const noexcept {
    return std::uint64_t{key_[0]} | (std::uint64_t{key_[1]} << 32);
  }
  [[nodiscard]] std::uint32_t stream() const noexcept { return stream_; }

  // Open interval (-1, 1), symmetric about 0.
  static double to_symmetric(std::uint32_t w) noexcept {
    return (static_cast<double>(w) + 0.5) * 0x1.0p-31 - 1.0;
  }

 private:
  Philox4x32::Key key_;
  std::uint32_t stream_;
};

/// SplitMix64 finalizer, used to derive independent seeds for auxiliary
/// ensembles (e.g. the same-law reference ensemble) from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace nlwmix
