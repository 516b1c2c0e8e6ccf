#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "nlwmix/ensemble.hpp"

using namespace nlwmix;

namespace {

Model make_model(double b0) {
  ModelOptions opt;
  opt.gamma = 0.12;
  opt.noise.b0 = b0;
  return Model(std::make_shared<Basis>(1, 16), opt);
}

EnsembleOptions threads(unsigned k) {
  EnsembleOptions opt;
  opt.threads = k;
  return opt;
}

}  // namespace

TEST(Ensemble, SinglePathEqualsSimulatePath) {
  const auto m = make_model(0.2);
  const auto y0 = mode_one_state(m, 2.0);
  const auto ens = simulate_ensemble(y0, m, 1, 2.0, 1e-3, 7, uniform_checkpoints(2.0, 0.5), threads(1));
  const auto traj = simulate_path(y0, m, 2.0, 1e-3, 7, {0, 500});
  ASSERT_EQ(ens.states[0].size(), traj.states.size());
  for (std::size_t c = 0; c < traj.states.size(); ++c) {
    EXPECT_EQ(ens.states[0][c].u, traj.states[c].u);
    EXPECT_EQ(ens.states[0][c].v, traj.states[c].v);
    EXPECT_DOUBLE_EQ(ens.checkpoints[c], 0.5 * c);
  }
}

TEST(Ensemble, IndependentOfThreadCount) {
  const auto m = make_model(0.2);
  const auto y0 = mode_one_state(m, 2.0);
  const auto a = simulate_ensemble(y0, m, 9, 1.0, 1e-3, 3, {0.5, 1.0}, threads(1));
  const auto b = simulate_ensemble(y0, m, 9, 1.0, 1e-3, 3, {0.5, 1.0}, threads(3));
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(a.energies[i], b.energies[i]);
    EXPECT_EQ(a.states[i][1].u, b.states[i][1].u);
  }
  EXPECT_NE(a.states[0][1].u, a.states[1][1].u);
}

TEST(Ensemble, ZeroNoiseGivesIdenticalPaths) {
  const auto m = make_model(0.0);
  const auto ens = simulate_ensemble(mode_one_state(m, 2.0), m, 5, 1.0, 1e-3, 3, {1.0}, threads(2));
  for (std::size_t i = 1; i < 5; ++i) EXPECT_EQ(ens.states[i][0].u, ens.states[0][0].u);
}

TEST(Ensemble, RunningIntegralsAndHead) {
  const auto m = make_model(0.2);
  auto opt = threads(1);
  opt.integrands = {[](const State&) { return 1.0; }};
  const auto ens = simulate_ensemble(State::zero(m.size()), m, 4, 2.0, 1e-3, 1, {0.0, 1.0, 2.0}, opt);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ens.integrals[0][i][0], 0.0);
    EXPECT_NEAR(ens.integrals[0][i][1], 1.0, 1e-12);
    EXPECT_NEAR(ens.integrals[0][i][2], 2.0, 1e-12);
  }
  const auto h = ens.head(2);
  EXPECT_EQ(h.n, 2u);
  EXPECT_EQ(h.energies.size(), 2u);
  EXPECT_EQ(h.integrals[0].size(), 2u);
  EXPECT_EQ(h.energy_marginal(1).size(), 2u);
  EXPECT_THROW(ens.head(5), ShapeError);
}

TEST(Ensemble, CheckpointValidation) {
  const auto m = make_model(0.2);
  EXPECT_THROW(simulate_ensemble(State::zero(m.size()), m, 1, 1.0, 1e-3, 1, {2.0}), ConfigError);
  EXPECT_THROW(simulate_ensemble(State::zero(m.size()), m, 0, 1.0, 1e-3, 1, {1.0}), ConfigError);
  EXPECT_EQ(uniform_checkpoints(1.0, 0.25), (std::vector<double>{0, 0.25, 0.5, 0.75, 1.0}));
}

TEST(Ensemble, SliceMatchesOffsetStreams) {
  const auto m = make_model(0.2);
  const auto y0 = mode_one_state(m, 2.0);
  const auto all = simulate_ensemble(y0, m, 6, 1.0, 1e-3, 4, {0.5, 1.0}, threads(1));
  auto opt = threads(1);
  opt.first_stream = 2;
  const auto part = simulate_ensemble(y0, m, 3, 1.0, 1e-3, 4, {0.5, 1.0}, opt);
  const auto cut = all.slice(2, 3);
  EXPECT_EQ(cut.n, 3u);
  EXPECT_EQ(cut.first_stream, 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(cut.states[i][1].u, part.states[i][1].u);
    EXPECT_EQ(cut.energies[i], part.energies[i]);
  }
  EXPECT_THROW((void)all.slice(4, 3), ShapeError);
}

TEST(Ensemble, UntilKeepsEarlierCheckpoints) {
  const auto m = make_model(0.2);
  auto opt = threads(1);
  opt.integrands = {[](const State&) { return 1.0; }};
  const auto ens = simulate_ensemble(State::zero(m.size()), m, 2, 2.0, 1e-3, 1, uniform_checkpoints(2.0, 0.5), opt);
  const auto early = ens.until(1.0);
  EXPECT_EQ(early.checkpoints, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(early.states[1].size(), 3u);
  EXPECT_EQ(early.states[1][2].u, ens.states[1][2].u);
  EXPECT_EQ(early.energies[0].size(), 3u);
  EXPECT_NEAR(early.integrals[0][1].back(), 1.0, 1e-12);
}
