#pragma once

// Long-time statistics: 1-Lipschitz observables, empirical W1 distances,
// exponential mixing fits, law of large numbers and central limit checks,
// hitting probabilities and the u = v + z regularity splitting.
//
// The dual-Lipschitz distance between laws on H is replaced by the maximum,
// over a finite set of 1-Lipschitz observables, of the 1-D Wasserstein
// distance between the observable marginals. That is a lower bound of the
// true distance, so its decay is a necessary condition for mixing only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlwmix/ensemble.hpp"
#include "nlwmix/errors.hpp"
#include "nlwmix/integrator.hpp"
#include "nlwmix/model.hpp"
#include "nlwmix/norms.hpp"
#include "nlwmix/stats.hpp"

namespace nlwmix {

struct Observable {
  std::string name;
  StateFunctional fn;
};

struct ObservableSet {
  std::vector<Observable> items;

  [[nodiscard]] std::size_t size() const noexcept { return items.size(); }
  [[nodiscard]] const Observable& operator[](std::size_t k) const { return items.at(k); }
};

/// Clipped H-orthonormal coordinates sqrt(lambda_j) u_j and v_j + alpha u_j
/// for the first `modes` modes, the clipped norm |y|_H and, for bounded f,
/// the clipped potential int F(u) / (sup|f| sqrt(Vol / lambda_1)). Every entry
/// is 1-Lipschitz on H.
inline ObservableSet default_observables(const Model& m, std::size_t modes = 8, double clip = 10.0) {
  if (!(clip > 0.0)) throw ConfigError("observable clip level must be positive");
  modes = std::min(modes, m.size());
  const double alpha = m.alpha();
  const auto basis = m.basis_ptr();
  ObservableSet set;
  auto clamp = [clip](double x) { return std::clamp(x, -clip, clip); };
  for (std::size_t j = 0; j < modes; ++j) {
    const double root = std::sqrt(basis->eigenvalue(j));
    set.items.push_back({"p" + std::to_string(j + 1), [=](const State& s) { return clamp(root * s.u[j]); }});
    set.items.push_back(
        {"q" + std::to_string(j + 1), [=](const State& s) { return clamp(s.v[j] + alpha * s.u[j]); }});
  }
  set.items.push_back({"norm", [=](const State& s) { return std::min(std::sqrt(phase_norm_sq(s, *basis, alpha)), clip); }});
  if (m.nonlinearity().is_bounded() && !m.nonlinearity().is_zero()) {
    // |int F(u) - F(u')| <= sup|f| sqrt(Vol) |u - u'|_{L2} <= sup|f| sqrt(Vol / lambda_1) |y - y'|_H.
    const double scale = std::sqrt(basis->volume() / basis->eigenvalue(0));
    const auto nl = m.nonlinearity();
    set.items.push_back({"potential", [=](const State& s) {
                           NonlinearEvaluator eval(*basis, nl);
                           return std::min(eval.primitive_integral(s.u) / scale, clip);
                         }});
  }
  return set;
}

/// Exact W1 between two empirical laws on the line: the integral of
/// |F_a - F_b| over the merged support.
inline double w1_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw SampleError("w1_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double x = std::min(a[0], b[0]);
  double total = 0.0;
  while (i < a.size() || j < b.size()) {
    double next;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      next = a[i];
    } else {
      next = b[j];
    }
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - x);
    x = next;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return total;
}

struct MixingReport {
  std::vector<double> times;
  std::vector<std::string> observables;
  std::vector<std::vector<double>> w1;     // [observable][checkpoint]
  std::vector<std::vector<double>> floor;  // same-law distances, [observable][checkpoint]
  std::vector<double> pooled;              // max over observables
  std::vector<double> pooled_floor;
  double kappa = 0.0;  // fitted decay rate of the pooled distance
  double prefactor = 0.0;
  double r2 = 0.0;
  double fit_t0 = 0.0, fit_t1 = 0.0;
  bool degenerate = false;  // nothing above the noise floor to fit
};

/// Distances between ensembles a and b per checkpoint; `same_law`, if given,
/// is a second ensemble with the law of b and sets the noise floor.
inline MixingReport mixing_report(const Ensemble& a, const Ensemble& b, const Ensemble* same_law,
                                  const ObservableSet& obs, double t0, double t1) {
  if (a.checkpoints.size() != b.checkpoints.size()) throw ShapeError("ensembles use different checkpoints");
  MixingReport rep;
  rep.times = a.checkpoints;
  rep.fit_t0 = t0;
  rep.fit_t1 = t1;
  const std::size_t nc = rep.times.size();
  rep.pooled.assign(nc, 0.0);
  rep.pooled_floor.assign(nc, 0.0);
  for (const auto& o : obs.items) {
    rep.observables.push_back(o.name);
    std::vector<double> w(nc), fl(nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto mb = b.marginal(c, o.fn);
      w[c] = w1_distance(a.marginal(c, o.fn), mb);
      if (same_law) fl[c] = w1_distance(same_law->marginal(c, o.fn), mb);
      rep.pooled[c] = std::max(rep.pooled[c], w[c]);
      rep.pooled_floor[c] = std::max(rep.pooled_floor[c], fl[c]);
    }
    rep.w1.push_back(std::move(w));
    rep.floor.push_back(std::move(fl));
  }
  std::vector<double> x, y;
  for (std::size_t c = 0; c < nc; ++c) {
    if (rep.times[c] < t0 - 1e-12 || rep.times[c] > t1 + 1e-12) continue;
    if (!(rep.pooled[c] > 0.0)) continue;
    x.push_back(rep.times[c]);
    y.push_back(std::log(rep.pooled[c]));
  }
  // Degenerate when the fit window never rises above twice the floor.
  bool above = !same_law;
  for (std::size_t c = 0; c < nc && same_law; ++c) {
    if (rep.times[c] >= t0 - 1e-12 && rep.times[c] <= t1 + 1e-12 && rep.pooled[c] > 2.0 * rep.pooled_floor[c]) {
      above = true;
    }
  }
  if (x.size() < 3 || !above) {
    rep.degenerate = true;
    return rep;
  }
  const auto fit = stats::linear_fit(x, y);
  rep.kappa = -fit.slope;
  rep.prefactor = std::exp(fit.intercept);
  rep.r2 = fit.r2;
  return rep;
}

struct MixingRun {
  Ensemble a, b, floor;
  MixingReport report;
};

/// Ensembles from y0a and y0b plus a second ensemble from y0b for the noise
/// floor, on disjoint noise streams of one seed.
inline MixingRun mixing_rate(const State& y0a, const State& y0b, const Model& m, const ObservableSet& obs,
                             std::size_t n, double T, double dt, std::uint64_t seed,
                             const std::vector<double>& checkpoints, double t0, double t1, unsigned threads = 0) {
  EnsembleOptions opt;
  opt.threads = threads;
  opt.first_stream = 0;
  MixingRun run;
  run.a = simulate_ensemble(y0a, m, n, T, dt, seed, checkpoints, opt);
  opt.first_stream = static_cast<std::uint32_t>(n);
  run.b = simulate_ensemble(y0b, m, n, T, dt, seed, checkpoints, opt);
  opt.first_stream = static_cast<std::uint32_t>(2 * n);
  run.floor = simulate_ensemble(y0b, m, n, T, dt, seed, checkpoints, opt);
  run.report = mixing_report(run.a, run.b, &run.floor, obs, t0, t1);
  return run;
}

struct LlnCurve {
  std::vector<double> t;
  std::vector<double> err;       // |running average - reference|
  std::vector<double> envelope;  // sup over s >= t of err(s), on the recorded times
  double slope = 0.0;            // log-log slope of err
  double envelope_slope = 0.0;   // log-log slope of the envelope
  double r2 = 0.0;
  double envelope_r2 = 0.0;
};

inline void fit_lln(LlnCurve& c, double t_fit_min) {
  c.envelope.assign(c.err.size(), 0.0);
  double run = 0.0;
  for (std::size_t k = c.err.size(); k-- > 0;) {
    run = std::max(run, c.err[k]);
    c.envelope[k] = run;
  }
  std::vector<double> x, y, ye;
  for (std::size_t k = 0; k < c.t.size(); ++k) {
    if (c.t[k] < t_fit_min || !(c.err[k] > 0.0)) continue;
    x.push_back(std::log(c.t[k]));
    y.push_back(std::log(c.err[k]));
    ye.push_back(std::log(c.envelope[k]));
  }
  if (x.size() < 2) return;
  const auto f = stats::linear_fit(x, y);
  const auto fe = stats::linear_fit(x, ye);
  c.slope = f.slope;
  c.r2 = f.r2;
  c.envelope_slope = fe.slope;
  c.envelope_r2 = fe.r2;
}

/// Dyadic times t_min 2^k up to T, with T appended.
inline std::vector<double> dyadic_times(double t_min, double T) {
  if (!(t_min > 0.0) || t_min > T) throw ConfigError("dyadic_times needs 0 < t_min <= T");
  std::vector<double> out;
  for (double t = t_min; t <= T * (1.0 + 1e-12); t *= 2.0) out.push_back(t);
  if (T - out.back() > 1e-9 * T) out.push_back(T);
  return out;
}

/// Running-average error of psi along a stored trajectory at dyadic times.
inline LlnCurve lln_error_curve(const Trajectory& traj, const StateFunctional& psi, double reference,
                                double t_min = 1.0, double t_fit_min = 1.0) {
  if (traj.states.size() < 2) throw SampleError("lln_error_curve: trajectory too short");
  const double t_start = traj.states.front().t;
  const double T = traj.states.back().t - t_start;
  const auto marks = dyadic_times(t_min, T);
  LlnCurve c;
  double integral = 0.0;
  double prev = psi(traj.states[0]);
  std::size_t next = 0;
  for (std::size_t k = 1; k < traj.states.size() && next < marks.size(); ++k) {
    const double value = psi(traj.states[k]);
    const double t = traj.states[k].t - t_start;
    integral += 0.5 * (traj.states[k].t - traj.states[k - 1].t) * (value + prev);
    prev = value;
    while (next < marks.size() && t >= marks[next] - 1e-9) {
      c.t.push_back(t);
      c.err.push_back(std::abs(integral / t - reference));
      ++next;
    }
  }
  fit_lln(c, t_fit_min);
  return c;
}

/// Streaming version for long runs: a single path of length burn_in + T,
/// averaging psi over [burn_in, burn_in + T] without storing states.
inline LlnCurve lln_run(const State& y0, const Model& m, double T, double dt, std::uint64_t seed,
                        const StateFunctional& psi, double reference, double burn_in, double t_min,
                        double t_fit_min, std::uint32_t stream = 0) {
  const std::uint64_t burn_steps = burn_in > 0.0 ? step_count(burn_in, dt) : 0;
  const std::uint64_t steps = burn_steps + step_count(T, dt);
  const auto marks = dyadic_times(t_min, T);
  const LinearPropagator prop(m, dt);
  LlnCurve c;
  double integral = 0.0;
  double prev = 0.0;
  std::size_t next = 0;
  State s = y0;
  run_path(s, m, prop, steps, NoiseSource(seed, stream), [&](std::uint64_t k, const State& st, const auto&) {
    if (k < burn_steps) return;
    const double value = psi(st);
    if (k > burn_steps) integral += 0.5 * dt * (value + prev);
    prev = value;
    const double t = static_cast<double>(k - burn_steps) * dt;
    while (next < marks.size() && t >= marks[next] - 1e-9) {
      c.t.push_back(t);
      c.err.push_back(std::abs(integral / t - reference));
      ++next;
    }
  });
  fit_lln(c, t_fit_min);
  return c;
}

/// Time average of psi over [burn_in, burn_in + T] along one path; used as a
/// pilot estimate of the stationary mean when no exact value is known.
inline double time_average(const State& y0, const Model& m, double T, double dt, std::uint64_t seed,
                           const StateFunctional& psi, double burn_in, std::uint32_t stream) {
  const std::uint64_t burn_steps = burn_in > 0.0 ? step_count(burn_in, dt) : 0;
  const std::uint64_t steps = burn_steps + step_count(T, dt);
  const LinearPropagator prop(m, dt);
  double integral = 0.0, prev = 0.0;
  State s = y0;
  run_path(s, m, prop, steps, NoiseSource(seed, stream), [&](std::uint64_t k, const State& st, const auto&) {
    if (k < burn_steps) return;
    const double value = psi(st);
    if (k > burn_steps) integral += 0.5 * dt * (value + prev);
    prev = value;
  });
  return integral / (static_cast<double>(steps - burn_steps) * dt);
}

struct CltReport {
  double t = 0.0;
  std::vector<double> samples;  // t^{-1/2} int_0^t (psi - reference)
  double sigma = 0.0;           // sample standard deviation
  double mean = 0.0;
  double ks = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // zero variance: the limit is the point mass at 0
};

/// Uses integrand `q` of an ensemble run with EnsembleOptions::integrands.
inline CltReport clt_statistic(const Ensemble& ens, std::size_t q, std::size_t checkpoint, double reference) {
  if (q >= ens.integrals.size()) throw ConfigError("ensemble has no integrand with that index");
  if (checkpoint >= ens.checkpoints.size()) throw ConfigError("checkpoint index out of range");
  CltReport rep;
  const double t = static_cast<double>(ens.checkpoint_steps[checkpoint]) * ens.dt;
  if (!(t > 0.0)) throw ConfigError("central limit statistic needs t > 0");
  rep.t = t;
  for (std::size_t i = 0; i < ens.n; ++i) {
    if (ens.failed[i]) continue;
    rep.samples.push_back((ens.integrals[q][i][checkpoint] - t * reference) / std::sqrt(t));
  }
  if (rep.samples.size() < 50) throw SampleError("central limit statistic needs at least 50 samples");
  rep.mean = stats::mean(rep.samples);
  rep.sigma = std::sqrt(stats::variance(rep.samples));
  if (!(rep.sigma > 0.0)) {
    rep.degenerate = true;
    return rep;
  }
  const auto ks = stats::ks_normal(rep.samples, 0.0, rep.sigma);
  rep.ks = ks.statistic;
  rep.p_value = ks.p_value;
  return rep;
}

/// Records the first step with |y|_H <= d.
class FirstHitMonitor final : public PathMonitor {
 public:
  FirstHitMonitor(const Model& m, double d, double dt) : basis_(m.basis_ptr()), alpha_(m.alpha()), d2_(d * d), dt_(dt) {}

  void observe(std::uint64_t step, const State& s, double) override {
    if (hit_) return;
    if (phase_norm_sq(s, *basis_, alpha_) <= d2_) {
      hit_ = true;
      t_ = static_cast<double>(step) * dt_;
    }
  }

  [[nodiscard]] std::vector<double> result() const override {
    return {hit_ ? t_ : std::numeric_limits<double>::quiet_NaN()};
  }

 private:
  std::shared_ptr<const Basis> basis_;
  double alpha_, d2_, dt_;
  bool hit_ = false;
  double t_ = 0.0;
};

struct HittingReport {
  double d = 0.0;
  double T = 0.0;
  std::size_t n = 0;
  std::size_t hits = 0;
  stats::Interval estimate;
  std::vector<double> first_hit;  // pathwise first entry times (NaN if never)
  std::vector<double> histogram_edges;
  std::vector<std::size_t> histogram;
};

/// Fixed-time hitting frequency of B_H(d) at the last checkpoint.
inline HittingReport hitting_from_ensemble(const Ensemble& ens, const Model& m, double d, double level = 0.95,
                                           std::size_t bins = 20) {
  if (!(d > 0.0)) throw ConfigError("ball radius d must be positive");
  if (ens.checkpoints.empty()) throw ConfigError("ensemble has no checkpoints");
  const std::size_t c = ens.checkpoints.size() - 1;
  HittingReport rep;
  rep.d = d;
  rep.T = ens.checkpoints[c];
  const auto norms = ens.marginal(c, [&](const State& s) { return std::sqrt(phase_norm_sq(s, m.basis(), m.alpha())); });
  rep.n = norms.size();
  rep.hits = static_cast<std::size_t>(std::count_if(norms.begin(), norms.end(), [d](double x) { return x <= d; }));
  rep.estimate = stats::wilson_interval(rep.hits, rep.n, level);
  for (std::size_t i = 0; i < ens.n; ++i) {
    if (!ens.failed[i] && ens.monitor_values[i].size() == 1) rep.first_hit.push_back(ens.monitor_values[i][0]);
  }
  if (bins > 0 && rep.T > 0.0) {
    rep.histogram.assign(bins, 0);
    for (std::size_t k = 0; k <= bins; ++k) rep.histogram_edges.push_back(rep.T * static_cast<double>(k) / bins);
    for (double t : rep.first_hit) {
      if (std::isnan(t)) continue;
      const auto k = std::min(bins - 1, static_cast<std::size_t>(t / rep.T * static_cast<double>(bins)));
      ++rep.histogram[k];
    }
  }
  return rep;
}

inline HittingReport hitting_probability(const State& y0, const Model& m, double d, double T, std::size_t n,
                                         double dt, std::uint64_t seed, unsigned threads = 0,
                                         std::uint32_t first_stream = 0) {
  if (!(d > 0.0)) throw ConfigError("ball radius d must be positive");
  if (T == 0.0) {
    HittingReport rep;
    rep.d = d;
    rep.n = n;
    rep.hits = std::sqrt(phase_norm_sq(y0, m.basis(), m.alpha())) <= d ? n : 0;
    rep.estimate = stats::wilson_interval(rep.hits, n);
    return rep;
  }
  EnsembleOptions opt;
  opt.threads = threads;
  opt.first_stream = first_stream;
  opt.monitor = [&m, d, dt] { return std::make_unique<FirstHitMonitor>(m, d, dt); };
  const auto ens = simulate_ensemble(y0, m, n, T, dt, seed, {T}, opt);
  return hitting_from_ensemble(ens, m, d);
}

struct SplitReport {
  double s = 0.0;
  std::vector<double> times;
  std::vector<double> hs_norm;      // |xi_z(t)|_{H^s}
  double max_split_error = 0.0;     // max |v + z - u| over modes and steps
  double max_replay_error = 0.0;    // recomputed u against the stored states
};

inline void check_split_index(const Model& m, double s) {
  const double upper = 1.0 - m.nonlinearity().rho() / 2.0;
  if (!(s > 0.0 && s < upper)) {
    throw ConfigError("Sobolev index s must lie in (0, " + std::to_string(upper) + ")");
  }
}

/// Replays the trajectory's noise to split u = v + z, with v the linear
/// stochastic wave from y(0) and z the nonlinear remainder from 0:
///   v'' + gamma v' - Delta v = h + eta,   z'' + gamma z' - Delta z + f(u) = 0.
/// z is integrated on its own, so v + z = u is a genuine consistency check.
inline SplitReport split_uz_hs(const Trajectory& traj, const Model& m, double s) {
  check_split_index(m, s);
  if (traj.states.empty() || traj.noise.steps == 0 || !(traj.noise.dt > 0.0)) {
    throw ConfigError("trajectory carries no noise record");
  }
  const auto& rec = traj.noise;
  const LinearPropagator prop(m, rec.dt);
  const NoiseSource noise(rec.seed, rec.stream);
  const auto modes = prop.modes();
  const std::size_t M = m.size();
  const double half = 0.5 * rec.dt;
  const auto& basis = m.basis();

  State u = traj.states.front();
  State v = u;
  std::vector<double> z(M, 0.0), zt(M, 0.0);
  Stepper stepper(m, prop);
  stepper.reset(u);
  NoiseIncrement inc(M);
  const NoiseIncrement silent(M);

  SplitReport rep;
  rep.s = s;
  auto record = [&](std::uint64_t k) {
    double err = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      err = std::max({err, std::abs(v.u[j] + z[j] - u.u[j]), std::abs(v.v[j] + zt[j] - u.v[j])});
    }
    rep.max_split_error = std::max(rep.max_split_error, err);
    if (k % traj.record_every == 0 || k == rec.steps) {
      rep.times.push_back(u.t);
      rep.hs_norm.push_back(std::sqrt(phase_sobolev_norm_sq(z, zt, basis, s)));
      const std::size_t idx = rep.times.size() - 1;
      if (idx < traj.states.size()) {
        const auto& st = traj.states[idx];
        for (std::size_t j = 0; j < M; ++j) {
          rep.max_replay_error =
              std::max({rep.max_replay_error, std::abs(st.u[j] - u.u[j]), std::abs(st.v[j] - u.v[j])});
        }
      }
    }
  };
  record(0);
  const std::uint64_t steps = traj.failed ? (traj.states.size() - 1) * traj.record_every : rec.steps;
  for (std::uint64_t k = 0; k < steps; ++k) {
    noise.draw(k, prop, inc);
    for (std::size_t j = 0; j < M; ++j) zt[j] -= half * stepper.f_modal()[j];
    stepper.step(u, inc, k + 1);
    u.t = traj.states.front().t + static_cast<double>(k + 1) * rec.dt;
    prop.apply(v.u, v.v, inc.du, inc.dv);
    v.t = u.t;
    for (std::size_t j = 0; j < M; ++j) {
      const auto& phi = modes[j].phi;
      const double a = z[j], b = zt[j];
      z[j] = phi[0] * a + phi[1] * b;
      zt[j] = phi[2] * a + phi[3] * b - half * stepper.f_modal()[j];
    }
    record(k + 1);
  }
  return rep;
}

/// Ratio ||f(u) - f(v)||_{L2} / ((|u|^rho + |v|^rho + 1) |u - v|) with all
/// norms in H^{1-s}, s = (2 - rho) / (2 (rho + 1)).
struct LipschitzCheck {
  double s = 0.0;
  double c1_half = 0.0;  // max ratio over the first half of the pairs
  double c1_full = 0.0;  // max ratio over all pairs
  std::size_t pairs = 0;
};

inline LipschitzCheck lipschitz_check(const Model& m, std::span<const std::pair<State, State>> pairs) {
  if (pairs.empty()) throw SampleError("lipschitz_check: no pairs");
  const double rho = m.nonlinearity().rho();
  LipschitzCheck out;
  out.s = (2.0 - rho) / (2.0 * (rho + 1.0));
  const double sigma = 1.0 - out.s;
  std::vector<double> diff(m.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [a, b] = pairs[k];
    for (std::size_t j = 0; j < m.size(); ++j) diff[j] = a.u[j] - b.u[j];
    const double dnorm = std::sqrt(sobolev_norm_sq(diff, m.basis(), sigma));
    if (!(dnorm > 0.0)) continue;
    // ||f(u) - f(v)||_{L2} on the grid, not truncated to the retained modes.
    const auto na = m.basis().to_nodal(a.u);
    const auto nb = m.basis().to_nodal(b.u);
    std::vector<double> fd(na.size());
    for (std::size_t i = 0; i < na.size(); ++i) fd[i] = m.nonlinearity().f(na[i]) - m.nonlinearity().f(nb[i]);
    const double lhs = m.basis().nodal_l2(fd);
    const double ua = std::sqrt(sobolev_norm_sq(a.u, m.basis(), sigma));
    const double ub = std::sqrt(sobolev_norm_sq(b.u, m.basis(), sigma));
    const double ratio = lhs / ((std::pow(ua, rho) + std::pow(ub, rho) + 1.0) * dnorm);
    out.c1_full = std::max(out.c1_full, ratio);
    if (k < pairs.size() / 2) out.c1_half = std::max(out.c1_half, ratio);
    ++out.pairs;
  }
  return out;
}

/// ||(I - P_N) f(u_bar(t))||_{L2} along the free damped flow u_bar from y0,
/// per time and N; rows follow `times`, columns follow `Ns`.
inline std::vector<std::vector<double>> projection_tail(const Model& m, const State& y0, std::span<const double> times,
                                                        std::span<const std::size_t> Ns) {
  NonlinearEvaluator eval(m.basis(), m.nonlinearity());
  std::vector<double> f(m.size());
  std::vector<std::vector<double>> out;
  for (double t : times) {
    std::vector<double> u(m.size());
    for (std::size_t j = 0; j < m.size(); ++j) {
      const auto phi = oscillator_flow(m.basis().eigenvalue(j), m.gamma(), t);
      u[j] = phi[0] * y0.u[j] + phi[1] * y0.v[j];
    }
    eval.evaluate(u, f);
    std::vector<double> row;
    for (std::size_t N : Ns) {
      double acc = 0.0;
      for (std::size_t j = std::min(N, m.size()); j < m.size(); ++j) acc += f[j] * f[j];
      row.push_back(std::sqrt(acc));
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace nlwmix
