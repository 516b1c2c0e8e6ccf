#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nlwmix/stats.hpp"

namespace s = nlwmix::stats;

// Reference values below were computed once with scipy 1.15 / statsmodels and frozen.

TEST(Stats, MomentsAndQuantiles) {
  const std::vector<double> x{3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_DOUBLE_EQ(s::mean(x), 31.0 / 8.0);
  EXPECT_NEAR(s::variance(x), 7.553571428571429, 1e-12);
  EXPECT_NEAR(s::quantile(x, 0.3), 2.1, 1e-12);
  EXPECT_NEAR(s::quantile(x, 0.9), 6.9, 1e-12);
  EXPECT_DOUBLE_EQ(s::median(x), 3.5);
  EXPECT_THROW(s::quantile({}, 0.5), nlwmix::SampleError);
}

TEST(Stats, NormalQuantiles) {
  EXPECT_NEAR(s::normal_quantile(0.5), 0.0, 1e-14);
  EXPECT_NEAR(s::normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(s::normal_quantile(0.01), -2.3263478740408408, 1e-12);
  EXPECT_NEAR(s::z_value(0.99), 2.5758293035489004, 1e-12);
  EXPECT_NEAR(s::normal_cdf(1.959963984540054), 0.975, 1e-14);
}

TEST(Stats, WilsonInterval) {
  struct Case { std::size_t k, n; double lo, hi; };
  for (const auto& c : {Case{0, 10, 0.0, 0.27753279986288926}, Case{3, 10, 0.10779126740630104, 0.6032218525388546},
                        Case{84, 256, 0.27351975472737305, 0.3878121959190202},
                        Case{256, 256, 0.9852161435741285, 1.0},
                        Case{1, 1000, 0.00017654637062607765, 0.005642558597957937}}) {
    const auto ci = s::wilson_interval(c.k, c.n);
    EXPECT_NEAR(ci.lo, c.lo, 1e-9) << c.k << "/" << c.n;
    EXPECT_NEAR(ci.hi, c.hi, 1e-9) << c.k << "/" << c.n;
    EXPECT_DOUBLE_EQ(ci.estimate, static_cast<double>(c.k) / c.n);
  }
  const auto wide = s::wilson_interval(84, 256, 0.99);
  EXPECT_NEAR(wide.lo, 0.25771232907921393, 1e-9);
  EXPECT_NEAR(wide.hi, 0.4072217633095664, 1e-9);
}

TEST(Stats, LinearFits) {
  const std::vector<double> x{0, 1, 2, 3, 4, 5}, y{0.1, 0.9, 2.2, 2.8, 4.1, 5.2};
  const auto fit = s::linear_fit(x, y);
  EXPECT_NEAR(fit.slope, 1.02, 1e-12);
  EXPECT_NEAR(fit.intercept, 0.0, 1e-12);
  EXPECT_NEAR(fit.r2, 0.9930188164712299, 1e-12);
  EXPECT_NEAR(fit.slope_se, 0.04276179870598782, 1e-12);

  std::vector<double> y1(y);
  for (auto& v : y1) v += 1.0;
  const auto origin = s::fit_through_origin(x, y1);
  EXPECT_NEAR(origin.slope, 1.292727272727273, 1e-12);
  EXPECT_NEAR(origin.r2, 0.8888960507722439, 1e-12);
  EXPECT_NEAR(origin.slope_se, 0.0860674346415944, 1e-12);
  EXPECT_THROW(s::fit_through_origin(std::vector<double>{0, 0}, std::vector<double>{1, 2}), nlwmix::SampleError);
}

TEST(Stats, KolmogorovSurvival) {
  EXPECT_NEAR(s::kolmogorov_survival(0.5), 0.9639452436648751, 1e-10);
  EXPECT_NEAR(s::kolmogorov_survival(1.0), 0.26999967167735456, 1e-10);
  EXPECT_NEAR(s::kolmogorov_survival(1.36), 0.049485876755377876, 1e-10);
  EXPECT_NEAR(s::kolmogorov_survival(2.0), 0.0006709252557796953, 1e-10);
  EXPECT_EQ(s::kolmogorov_survival(0.0), 1.0);
}

TEST(Stats, KsStatistic) {
  const std::vector<double> x{-1.2, 0.3, 0.8, -0.1, 2.2, 0.05, -0.7, 1.1, -0.4, 0.6};
  const auto ks = s::ks_normal(x, 0.1, 0.9);
  EXPECT_NEAR(ks.statistic, 0.11207044787094261, 1e-12);
  EXPECT_NEAR(ks.p_value, 0.9991051142735421, 1e-9);
  EXPECT_THROW(s::ks_normal(x, 0.0, 0.0), nlwmix::SampleError);
}
