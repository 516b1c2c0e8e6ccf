#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nlwmix/coupling.hpp"

using namespace nlwmix;

namespace {

Model make_model(int M, double b0, Nonlinearity nl = Nonlinearity::sine_gordon(), double gamma = 0.12) {
  ModelOptions opt;
  opt.gamma = gamma;
  opt.nonlinearity = nl;
  opt.noise.b0 = b0;
  return Model(std::make_shared<Basis>(1, M), opt);
}

// |Phi(t) w0|_H mode by mode from the closed-form damped oscillator.
double linear_difference_norm(const Model& m, const State& w0, double t) {
  State w = State::zero(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double lam = m.basis().eigenvalue(j), g = m.gamma();
    const double omega = std::sqrt(lam - 0.25 * g * g);
    const double a = w0.u[j], b = (w0.v[j] + 0.5 * g * a) / omega;
    const double e = std::exp(-0.5 * g * t), c = std::cos(omega * t), s = std::sin(omega * t);
    w.u[j] = e * (a * c + b * s);
    w.v[j] = e * (-0.5 * g * (a * c + b * s) + omega * (-a * s + b * c));
  }
  return std::sqrt(phase_norm_sq(w, m.basis(), m.alpha()));
}

std::pair<State, State> pair_starts(const Model& m, double amplitude, double distance, std::uint32_t stream) {
  const State y = mode_one_state(m, amplitude);
  return {y, axpy(y, distance, random_h_direction(m, m.size(), 99, stream))};
}

CouplingParams params(std::size_t N, double T, std::uint64_t record_every = 10) {
  CouplingParams cp;
  cp.N = N;
  cp.T = T;
  cp.seed = 5;
  cp.record_every = record_every;
  return cp;
}

}  // namespace

TEST(Coupling, IdenticalStartsStayIdentical) {
  const auto m = make_model(16, 0.2);
  const State y = mode_one_state(m, 2.0);
  for (std::size_t N : {0u, 2u, 16u}) {
    const auto pair = simulate_fp_pair(y, y, m, params(N, 5.0), 1e-3);
    for (double d : pair.report.diff_norm) EXPECT_EQ(d, 0.0);
    EXPECT_EQ(pair.report.drift_l2, 0.0);
    EXPECT_TRUE(pair.report.fit.degenerate);
    EXPECT_EQ(pair.report.tv_bound, 0.0);
    for (std::size_t k = 0; k < pair.u.states.size(); ++k) EXPECT_EQ(pair.u.states[k].u, pair.v.states[k].u);
  }
}

TEST(Coupling, FullProjectionDifferenceIsLinear) {
  // With N = M the nonlinear kicks of u and v coincide and the shared noise
  // cancels, leaving the damped linear flow of the initial difference.
  const auto m = make_model(16, 0.2);
  const auto [y, y2] = pair_starts(m, 1.5, 0.5, 1);
  const auto rep = simulate_fp_pair(y, y2, m, params(16, 20.0), 1e-3, false).report;
  State w0 = State::zero(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    w0.u[j] = y2.u[j] - y.u[j];
    w0.v[j] = y2.v[j] - y.v[j];
  }
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    EXPECT_NEAR(rep.diff_norm[k], linear_difference_norm(m, w0, rep.times[k]), 1e-8);
  }
}

TEST(Coupling, ZeroNonlinearityDecaysAnalyticallyForEveryN) {
  const auto m = make_model(8, 0.2, Nonlinearity::zero());
  const auto [y, y2] = pair_starts(m, 1.0, 0.5, 2);
  State w0 = State::zero(m.size());
  for (std::size_t j = 0; j < m.size(); ++j) {
    w0.u[j] = y2.u[j] - y.u[j];
    w0.v[j] = y2.v[j] - y.v[j];
  }
  for (std::size_t N : {0u, 1u, 4u, 8u}) {
    const auto rep = simulate_fp_pair(y, y2, m, params(N, 10.0), 1e-3, false).report;
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
      EXPECT_NEAR(rep.diff_norm[k], linear_difference_norm(m, w0, rep.times[k]), 1e-8);
    }
    EXPECT_EQ(rep.drift_l2, 0.0);
  }
}

TEST(Coupling, FullProjectionContractsAtLeastAsFast) {
  const auto m = make_model(16, 0.2);
  for (std::uint32_t s = 0; s < 4; ++s) {
    const auto [y, y2] = pair_starts(m, 1.5, 0.5, s);
    auto cp = params(16, 60.0, 100);
    cp.stream = s;
    const double full = simulate_fp_pair(y, y2, m, cp, 1e-3, false).report.fit.rate;
    cp.N = 2;
    const double partial = simulate_fp_pair(y, y2, m, cp, 1e-3, false).report.fit.rate;
    EXPECT_GE(full, partial - 0.01) << "stream " << s;
  }
}

TEST(FpDecayRate, SyntheticExponential) {
  std::vector<double> t, d;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    d.push_back(3.0 * std::exp(-0.3 * t.back()));
  }
  const auto fit = fp_decay_rate(t, d, 0.0, 10.0);
  EXPECT_NEAR(fit.rate, 0.6, 1e-12);
  EXPECT_NEAR(fit.r2, 1.0, 1e-12);
  EXPECT_FALSE(fit.degenerate);
  d[50] = 0.0;
  EXPECT_TRUE(fp_decay_rate(t, d, 0.0, 10.0).degenerate);
  EXPECT_FALSE(fp_decay_rate(t, d, 6.0, 10.0).degenerate);
  EXPECT_THROW(fp_decay_rate(t, d, 9.95, 10.0), SampleError);
}

TEST(GirsanovDrift, VanishesForEqualPathsOrLinearModel) {
  const auto m = make_model(8, 0.2);
  const auto traj = simulate_path(mode_one_state(m, 2.0), m, 2.0, 1e-3, 1, {0, 10});
  const auto d = girsanov_drift(traj, traj, m, 4);
  EXPECT_EQ(d.drift_l2, 0.0);
  const auto lin = make_model(8, 0.2, Nonlinearity::zero());
  const auto [y, y2] = pair_starts(lin, 1.0, 0.5, 0);
  const auto pair = simulate_fp_pair(y, y2, lin, params(4, 2.0), 1e-3);
  EXPECT_EQ(girsanov_drift(pair.u, pair.v, lin, 4).drift_l2, 0.0);
  EXPECT_THROW(girsanov_drift(traj, traj, m, 9), ConfigError);
}

TEST(GirsanovDrift, StepGridIntegralAndRefinement) {
  const auto m = make_model(16, 0.0);
  const auto [y, y2] = pair_starts(m, 2.0, 0.5, 3);
  const auto fine = simulate_fp_pair(y, y2, m, params(4, 10.0, 1), 1e-3);
  EXPECT_NEAR(girsanov_drift(fine.u, fine.v, m, 4).drift_l2, fine.report.drift_l2, 1e-12 * fine.report.drift_l2);
  double err[2];
  int i = 0;
  for (std::uint64_t every : {50u, 100u}) {
    const auto coarse = simulate_fp_pair(y, y2, m, params(4, 10.0, every), 1e-3);
    err[i++] = std::abs(girsanov_drift(coarse.u, coarse.v, m, 4).drift_l2 - fine.report.drift_l2);
  }
  EXPECT_NEAR(err[1] / err[0], 4.0, 0.6);
}

TEST(GirsanovDrift, SwitchedOffAfterStopping) {
  const auto m = make_model(16, 0.2);
  const auto [y, y2] = pair_starts(m, 2.0, 0.5, 0);
  auto cp = params(4, 20.0, 10);
  StoppingParams sp;
  sp.r = 0.05;  // tiny threshold: the energy fluctuations cross it early
  cp.stopping = sp;
  const auto rep = simulate_fp_pair(y, y2, m, cp, 1e-3, false).report;
  ASSERT_TRUE(rep.tau_tilde.has_value());
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    if (rep.times[k] > *rep.tau_tilde) {
      EXPECT_EQ(rep.drift_sq[k], 0.0);
    }
  }
  const auto free = simulate_fp_pair(y, y2, m, params(4, 20.0, 10), 1e-3, false).report;
  EXPECT_LT(rep.drift_l2, free.drift_l2);
}

TEST(Novikov, FactorAndBound) {
  const std::vector<double> b{1.0, 0.25, 0.0};
  EXPECT_EQ(novikov_factor(b, 0), 0.0);
  EXPECT_EQ(novikov_factor(b, 2), 24.0);
  EXPECT_THROW(novikov_factor(b, 3), ConfigError);
  EXPECT_THROW(novikov_factor(b, 4), ConfigError);
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_EQ(novikov_tv_bound(zero, b, 2).bound, 0.0);
  const std::vector<double> one{0.01};
  EXPECT_NEAR(novikov_tv_bound(one, b, 2).bound, 0.5 * std::sqrt(std::exp(0.5 * 24.0 * 0.01) - 1.0), 1e-15);
  // Mean of exponentials, not exponential of the mean.
  const std::vector<double> two{0.0, 0.02};
  const double mean_exp = 0.5 * (1.0 + std::exp(24.0 * 0.02));
  EXPECT_NEAR(novikov_tv_bound(two, b, 2).bound, 0.5 * std::sqrt(std::sqrt(mean_exp) - 1.0), 1e-15);
  EXPECT_THROW(novikov_tv_bound(std::vector<double>{}, b, 2), SampleError);
  EXPECT_THROW(novikov_tv_bound(std::vector<double>{-1.0}, b, 2), SampleError);
}

TEST(Novikov, BoundIsMonotoneInEachSample) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> unif(0.0, 0.1);
  const std::vector<double> b{0.2, 0.05};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(5);
    for (auto& v : x) v = unif(gen);
    const double before = novikov_tv_bound(x, b, 2).bound;
    x[trial % 5] += unif(gen);
    EXPECT_GE(novikov_tv_bound(x, b, 2).bound, before);
  }
}

TEST(FpScan, LocateNStar) {
  auto row = [](std::size_t N, bool c) {
    FpScanRow r;
    r.N = N;
    r.contracts = c;
    return r;
  };
  EXPECT_EQ(locate_n_star({row(0, false), row(1, true), row(2, true), row(4, true)}), 1u);
  EXPECT_EQ(locate_n_star({row(4, true), row(0, true), row(2, false), row(1, true)}), 4u);
  EXPECT_FALSE(locate_n_star({row(0, true), row(1, false)}).has_value());
  EXPECT_EQ(locate_n_star({row(0, true), row(1, true)}), 0u);
  EXPECT_FALSE(locate_n_star({}).has_value());
}

TEST(FpScan, SummaryCountsPassesAndDegenerates) {
  std::vector<FpReport> reps(4);
  reps[0].fit = {0.05, 0.99, 10, false};
  reps[1].fit = {0.02, 0.99, 10, false};
  reps[2].fit = {0.05, 0.5, 10, false};
  reps[3].fit.degenerate = true;
  const auto row = summarize_fp(2, 1.5, reps, 0.03, 0.9);
  EXPECT_EQ(row.pairs, 4u);
  EXPECT_EQ(row.degenerate, 1u);
  EXPECT_DOUBLE_EQ(row.pass_fraction, 0.25);
  EXPECT_FALSE(row.contracts);
  EXPECT_DOUBLE_EQ(row.min_rate, 0.02);
  EXPECT_DOUBLE_EQ(row.min_r2, 0.5);
  EXPECT_DOUBLE_EQ(row.median_rate, 0.05);
}

TEST(FpScan, RandomDirectionIsUnit) {
  const auto m = make_model(16, 0.2);
  const auto d = random_h_direction(m, 4, 3, 7);
  EXPECT_NEAR(phase_norm_sq(d, m.basis(), m.alpha()), 1.0, 1e-14);
  for (std::size_t j = 4; j < m.size(); ++j) {
    EXPECT_EQ(d.u[j], 0.0);
    EXPECT_EQ(d.v[j], 0.0);
  }
}
