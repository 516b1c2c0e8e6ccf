#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nlwmix/rng.hpp"
#include "nlwmix/stats.hpp"

using nlwmix::GaussianStream;
using nlwmix::Philox4x32;

// Known-answer vectors of Philox4x32-10 from the Random123 distribution.
TEST(Philox, KnownAnswerZero) {
  const auto out = Philox4x32::apply({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = Philox4x32::apply({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const auto out = Philox4x32::apply({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(GaussianStream, SymmetricUniformsStayInsideOpenInterval) {
  EXPECT_GT(GaussianStream::to_symmetric(0), -1.0);
  EXPECT_LT(GaussianStream::to_symmetric(0xffffffffu), 1.0);
  EXPECT_DOUBLE_EQ(GaussianStream::to_symmetric(0) + GaussianStream::to_symmetric(0xffffffffu), 0.0);
}

TEST(GaussianStream, AddressableAndDeterministic) {
  const GaussianStream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  EXPECT_EQ(a.normal_pair(17, 5), b.normal_pair(17, 5));
  EXPECT_NE(a.normal_pair(17, 5), c.normal_pair(17, 5));
  EXPECT_NE(a.normal_pair(17, 5), d.normal_pair(17, 5));
  EXPECT_NE(a.normal_pair(17, 5), a.normal_pair(18, 5));
  EXPECT_NE(a.normal_pair(17, 5), a.normal_pair(17, 6));
  EXPECT_EQ(a.seed(), 42u);
  EXPECT_EQ(a.stream(), 3u);
  const GaussianStream big(0x123456789abcdefull, 0);
  EXPECT_EQ(big.seed(), 0x123456789abcdefull);
}

TEST(GaussianStream, MomentsAndNormality) {
  const GaussianStream g(7, 0);
  std::vector<double> x;
  const std::size_t n = 200000;
  double cross = 0.0;
  for (std::uint64_t k = 0; k < n / 2; ++k) {
    const auto [a, b] = g.normal_pair(k, 0);
    x.push_back(a);
    x.push_back(b);
    cross += a * b;
  }
  const double mean = nlwmix::stats::mean(x);
  const double var = nlwmix::stats::variance(x);
  // Five standard errors of each moment.
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(cross / (n / 2), 0.0, 5.0 / std::sqrt(n / 2));
  std::vector<double> head(x.begin(), x.begin() + 5000);
  EXPECT_GT(nlwmix::stats::ks_normal(head, 0.0, 1.0).p_value, 0.001);
}

TEST(MixSeed, SpreadsNeighbouringSeeds) {
  EXPECT_NE(nlwmix::mix_seed(1), nlwmix::mix_seed(2));
  EXPECT_NE(nlwmix::mix_seed(0), 0u);
  static_assert(nlwmix::mix_seed(5) == nlwmix::mix_seed(5));
}
