#pragma once

// Lyapunov machinery: weighted H-norm, energy functional, the growth
// functional F_y(t) = |E(y(t))| + alpha int_0^t |E(y(s))| ds with its
// stopping time, exponential moments and supermartingale tails.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlwmix/ensemble.hpp"
#include "nlwmix/errors.hpp"
#include "nlwmix/integrator.hpp"
#include "nlwmix/model.hpp"
#include "nlwmix/norms.hpp"
#include "nlwmix/stats.hpp"

namespace nlwmix {

inline double h_norm_sq(const State& s, const Basis& basis, double alpha) {
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  return phase_norm_sq(s, basis, alpha);
}

inline double energy(const State& s, const Model& m) {
  NonlinearEvaluator eval(m.basis(), m.nonlinearity());
  return energy_from_primitive(s, m.basis(), m.alpha(), eval.primitive_integral(s.u));
}

/// Undamped-norm energy |grad u|^2 + |u_t|^2 + 2 int F(u) (alpha = 0).
inline double energy_standard(const State& s, const Model& m) {
  NonlinearEvaluator eval(m.basis(), m.nonlinearity());
  return energy_from_primitive(s, m.basis(), 0.0, eval.primitive_integral(s.u));
}

/// Ito drift of E along the Galerkin system:
///   2 (y, g)_H + 2 (f(u), u_t) + sum_j b_j^2.
inline double energy_generator(const State& s, const Model& m, std::span<const double> f_modal) {
  const auto lam = m.basis().eigenvalues();
  const auto h = m.h();
  const double a = m.alpha();
  const double g = m.gamma();
  double acc = 0.0;
  for (std::size_t j = 0; j < lam.size(); ++j) {
    const double u = s.u[j];
    const double v = s.v[j];
    const double accel = -g * v - lam[j] * u - f_modal[j] + h[j];
    acc += lam[j] * u * v + (v + a * u) * (accel + a * v) + f_modal[j] * v;
  }
  return 2.0 * acc + m.noise_B();
}

/// Trapezoid growth functional on the given time grid.
inline std::vector<double> growth_functional(std::span<const double> times, std::span<const double> energies,
                                             double alpha) {
  if (times.empty() || times.size() != energies.size()) throw SampleError("growth_functional: bad series");
  std::vector<double> out(times.size());
  double integral = 0.0;
  out[0] = std::abs(energies[0]);
  for (std::size_t k = 1; k < times.size(); ++k) {
    integral += 0.5 * (times[k] - times[k - 1]) * (std::abs(energies[k]) + std::abs(energies[k - 1]));
    out[k] = std::abs(energies[k]) + alpha * integral;
  }
  return out;
}

inline std::vector<double> trajectory_energies(const Trajectory& traj, const Model& m) {
  NonlinearEvaluator eval(m.basis(), m.nonlinearity());
  std::vector<double> e;
  e.reserve(traj.states.size());
  for (const auto& s : traj.states) {
    e.push_back(energy_from_primitive(s, m.basis(), m.alpha(), eval.primitive_integral(s.u)));
  }
  return e;
}

inline std::vector<double> growth_functional(const Trajectory& traj, const Model& m) {
  if (traj.states.empty()) throw SampleError("growth_functional: empty trajectory");
  const auto t = traj.times();
  return growth_functional(t, trajectory_energies(traj, m), m.alpha());
}

/// Constants of the stopping time tau_y = inf{t : F_y(t) >= F_y(0) + (L+M) t + r}.
struct StoppingParams {
  double L = 0.0;
  double M_rate = 0.0;
  double r = 0.0;
  double beta = 0.0;  // derived, alpha / (8 sup_j b_j^2)
  double K = 0.0;     // energy drift constant the rates were built from
};

/// alpha / (8 sup_j b_j^2); infinite without noise, where every tail vanishes.
inline double supermartingale_beta(const Model& m) {
  const double sup_b2 = m.noise_sup_b2();
  if (!(sup_b2 > 0.0)) return std::numeric_limits<double>::infinity();
  return m.alpha() / 8.0 / sup_b2;
}

/// L = K + 4 alpha C, M = 2/beta and r = 5/beta + 4 C unless overridden.
inline StoppingParams make_stopping_params(const Model& m, double K, std::optional<double> M_rate = {},
                                           std::optional<double> r = {}) {
  StoppingParams p;
  p.K = K;
  p.beta = supermartingale_beta(m);
  p.L = K + 4.0 * m.alpha() * m.c_diss();
  p.M_rate = M_rate.value_or(2.0 / p.beta);
  p.r = r.value_or(5.0 / p.beta + 4.0 * m.c_diss());
  if (!(p.L >= 0.0 && p.M_rate >= 0.0 && p.r >= 0.0) || !std::isfinite(p.L + p.M_rate + p.r)) {
    throw ConfigError("stopping constants must be finite and nonnegative");
  }
  return p;
}

/// First grid time after the start with F_y(t) >= F_y(0) + rate t + r;
/// times are measured from times[0].
inline std::optional<double> stopping_time(std::span<const double> times, std::span<const double> growth,
                                           double rate, double r) {
  if (times.size() != growth.size()) throw SampleError("stopping_time: length mismatch");
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double t = times[k] - times[0];
    if (growth[k] >= growth[0] + rate * t + r) return times[k];
  }
  return std::nullopt;
}

inline std::optional<double> stopping_time(const Trajectory& traj, const StoppingParams& p, const Model& m) {
  const auto t = traj.times();
  const auto g = growth_functional(t, trajectory_energies(traj, m), m.alpha());
  return stopping_time(t, g, p.L + p.M_rate, p.r);
}

/// Estimate of K: the 99th percentile over calibration states of
/// LE + alpha E + (alpha/2) |y|_H^2, i.e. the smallest constant for which
/// the drift inequality LE <= -alpha E + K - (alpha/2)|y|^2 holds at that level.
inline double estimate_energy_constant(const Ensemble& calibration, const Model& m, double level = 0.99) {
  NonlinearEvaluator eval(m.basis(), m.nonlinearity());
  std::vector<double> f(m.size());
  std::vector<double> samples;
  for (std::size_t i = 0; i < calibration.n; ++i) {
    if (calibration.failed[i]) continue;
    for (const auto& s : calibration.states[i]) {
      const double F = eval.evaluate(s.u, f);
      const double e = energy_from_primitive(s, m.basis(), m.alpha(), F);
      const double y2 = phase_norm_sq(s, m.basis(), m.alpha());
      samples.push_back(energy_generator(s, m, f) + m.alpha() * e + 0.5 * m.alpha() * y2);
    }
  }
  if (samples.empty()) throw SampleError("calibration ensemble holds no states");
  return std::max(stats::quantile(std::move(samples), level), 0.0);
}

/// Streaming form of the stopping rule: feed (t, E) in time order; `crossed`
/// latches the first time F_y(t) >= F_y(0) + rate (t - t_0) + r.
class StoppingTracker {
 public:
  StoppingTracker(double alpha, double rate, double r) : alpha_(alpha), rate_(rate), r_(r) {}

  bool update(double t, double energy) {
    if (!started_) {
      started_ = true;
      t0_ = prev_t_ = t;
      prev_abs_ = std::abs(energy);
      growth0_ = prev_abs_;
      return false;
    } else {
      abs_integral_ += 0.5 * (t - prev_t_) * (std::abs(energy) + prev_abs_);
      prev_t_ = t;
      prev_abs_ = std::abs(energy);
    }
    if (!tau_ && prev_abs_ + alpha_ * abs_integral_ >= growth0_ + rate_ * (t - t0_) + r_) tau_ = t;
    return tau_.has_value();
  }

  [[nodiscard]] std::optional<double> tau() const noexcept { return tau_; }

 private:
  double alpha_, rate_, r_;
  bool started_ = false;
  double t0_ = 0.0, prev_t_ = 0.0, prev_abs_ = 0.0, growth0_ = 0.0, abs_integral_ = 0.0;
  std::optional<double> tau_;
};

/// Streams, per path, sup_t [E(t) - E(0) + int_0^t (alpha E - K)] on the step
/// grid, and the stopping time tau_y for the given rates (NaN if not crossed).
class TailMonitor final : public PathMonitor {
 public:
  /// Only steps with t <= horizon are seen, so one long ensemble can serve a shorter window.
  TailMonitor(double alpha, double dt, const StoppingParams& p,
              double horizon = std::numeric_limits<double>::infinity())
      : alpha_(alpha), dt_(dt), K_(p.K), horizon_(horizon), stopping_(alpha, p.L + p.M_rate, p.r) {}

  void observe(std::uint64_t step, const State&, double energy) override {
    const double t = static_cast<double>(step) * dt_;
    if (t > horizon_ + 0.5 * dt_) return;
    stopping_.update(t, energy);
    if (!started_) {
      started_ = true;
      e0_ = prev_ = energy;
      return;
    }
    drift_integral_ += 0.5 * dt_ * (alpha_ * (energy + prev_) - 2.0 * K_);
    prev_ = energy;
    sup_ = std::max(sup_, energy - e0_ + drift_integral_);
  }

  [[nodiscard]] std::vector<double> result() const override {
    return {sup_, stopping_.tau().value_or(std::numeric_limits<double>::quiet_NaN())};
  }

 private:
  double alpha_;
  double dt_;
  double K_;
  double horizon_;
  StoppingTracker stopping_;
  bool started_ = false;
  double e0_ = 0.0, prev_ = 0.0, sup_ = 0.0, drift_integral_ = 0.0;
};

inline MonitorFactory tail_monitor(const Model& m, double dt, const StoppingParams& p,
                                   double horizon = std::numeric_limits<double>::infinity()) {
  const double alpha = m.alpha();
  return [alpha, dt, p, horizon] { return std::make_unique<TailMonitor>(alpha, dt, p, horizon); };
}

struct TailReport {
  std::vector<double> r_grid;
  std::vector<double> empirical;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::vector<double> bound;
  std::vector<char> pass;
  double beta = 0.0;
  double K = 0.0;
  std::size_t paths = 0;
  // Frequency of a finite stopping time vs exp(4 beta C - beta r).
  double stopping_frequency = 0.0;
  double stopping_bound = 0.0;

  [[nodiscard]] bool all_pass() const { return std::all_of(pass.begin(), pass.end(), [](char c) { return c != 0; }); }
};

/// Exceedance frequency of the sup statistic per r against e^{-beta r}. The
/// ensemble must have been simulated with tail_monitor(); `tolerance`
/// relaxes the bound multiplicatively.
inline TailReport supermartingale_tail(const Ensemble& ens, const StoppingParams& p, const Model& m,
                                       std::span<const double> r_grid, double tolerance = 0.0,
                                       double level = 0.95) {
  TailReport rep;
  rep.beta = p.beta;
  rep.K = p.K;
  std::vector<double> sups;
  std::size_t stopped = 0;
  for (std::size_t i = 0; i < ens.n; ++i) {
    if (ens.failed[i]) continue;
    if (ens.monitor_values[i].size() != 2) throw SampleError("ensemble was not run with a tail monitor");
    sups.push_back(ens.monitor_values[i][0]);
    if (!std::isnan(ens.monitor_values[i][1])) ++stopped;
  }
  if (sups.empty()) throw SampleError("no usable paths for the tail estimate");
  rep.paths = sups.size();
  for (double r : r_grid) {
    const auto k = static_cast<std::size_t>(std::count_if(sups.begin(), sups.end(), [r](double s) { return s >= r; }));
    const auto ci = stats::wilson_interval(k, sups.size(), level);
    const double bound = std::exp(-p.beta * r);
    rep.r_grid.push_back(r);
    rep.empirical.push_back(ci.estimate);
    rep.ci_lo.push_back(ci.lo);
    rep.ci_hi.push_back(ci.hi);
    rep.bound.push_back(bound);
    rep.pass.push_back(ci.hi <= bound * (1.0 + tolerance) ? 1 : 0);
  }
  rep.stopping_frequency = static_cast<double>(stopped) / static_cast<double>(sups.size());
  rep.stopping_bound = std::min(1.0, std::exp(4.0 * p.beta * m.c_diss() - p.beta * p.r));
  return rep;
}

struct MomentSeries {
  std::vector<double> t;
  std::vector<double> value;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
};

/// Empirical mean of exp(kappa E(y(t))) per checkpoint with a normal 95% band.
inline MomentSeries exp_moment_series(const Ensemble& ens, double kappa, const Model& m) {
  if (kappa < 0.0) throw ConfigError("kappa must be >= 0");
  if (kappa * m.noise_B() > m.alpha() / 2.0 * (1.0 + 1e-12)) {
    throw ConfigError("kappa too large: the exponential moment needs kappa * B <= alpha / 2");
  }
  MomentSeries out;
  const double z = stats::z_value(0.95);
  for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) {
    std::vector<double> x;
    for (double e : ens.energy_marginal(c)) x.push_back(std::exp(kappa * e));
    const double mu = stats::mean(x);
    const double se = x.size() > 1 ? stats::standard_error(x) : 0.0;
    out.t.push_back(ens.checkpoints[c]);
    out.value.push_back(mu);
    out.ci_lo.push_back(mu - z * se);
    out.ci_hi.push_back(mu + z * se);
  }
  return out;
}

/// Trend of the exponential moment over [t0, t1]: the mean over paths of the
/// per-path least-squares slopes, with its across-path standard error.
struct TrendResult {
  double slope = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double max_over_median = 0.0;
};

inline TrendResult exp_moment_trend(const Ensemble& ens, double kappa, double t0, double t1) {
  std::vector<std::size_t> idx;
  std::vector<double> tt;
  for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) {
    if (ens.checkpoints[c] >= t0 - 1e-12 && ens.checkpoints[c] <= t1 + 1e-12) {
      idx.push_back(c);
      tt.push_back(ens.checkpoints[c]);
    }
  }
  if (idx.size() < 3) throw SampleError("trend window holds fewer than three checkpoints");
  std::vector<double> slopes;
  std::vector<double> mean_series(idx.size(), 0.0);
  std::size_t used = 0;
  for (std::size_t i = 0; i < ens.n; ++i) {
    if (ens.failed[i]) continue;
    std::vector<double> y;
    for (auto c : idx) y.push_back(std::exp(kappa * ens.energies[i][c]));
    for (std::size_t q = 0; q < y.size(); ++q) mean_series[q] += y[q];
    ++used;
    slopes.push_back(stats::linear_fit(tt, y).slope);
  }
  for (double& v : mean_series) v /= static_cast<double>(used);
  TrendResult tr;
  tr.slope = stats::mean(slopes);
  const double se = stats::standard_error(slopes);
  const double z = stats::z_value(0.95);
  tr.ci_lo = tr.slope - z * se;
  tr.ci_hi = tr.slope + z * se;
  const double med = stats::median(mean_series);
  tr.max_over_median = *std::max_element(mean_series.begin(), mean_series.end()) / med;
  return tr;
}

/// Fit of the a priori bound  m(t) <= m(0) e^{-a t} + C  for the mean energy
/// m(t): a from least squares of m(t) = (m(0) - C) e^{-a t} + C on the fit
/// window, C the smallest constant making the bound hold there. Validated by
/// the largest relative excursion of m above the bound on the rest.
struct EnergyBoundFit {
  double rate = 0.0;
  double constant = 0.0;
  double max_excursion = 0.0;  // max over validation of (m - bound) / bound
  std::vector<double> t;
  std::vector<double> mean;
  std::vector<double> se;
  std::vector<double> bound;
};

inline EnergyBoundFit fit_energy_bound(std::span<const double> t, std::span<const double> mean_energy,
                                       double t_split) {
  if (t.size() != mean_energy.size() || t.size() < 4) throw SampleError("fit_energy_bound: bad series");
  const double m0 = mean_energy[0];
  std::vector<std::size_t> fit_idx;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] <= t_split + 1e-12) fit_idx.push_back(k);
  }
  if (fit_idx.size() < 3) throw SampleError("fit window holds fewer than three points");
  // For fixed a, m(t) - m0 e^{-at} = C (1 - e^{-at}) is linear in C.
  auto sse_for = [&](double a, double& c_out) {
    double num = 0.0, den = 0.0;
    for (auto k : fit_idx) {
      const double g = 1.0 - std::exp(-a * (t[k] - t[0]));
      num += g * (mean_energy[k] - m0 * std::exp(-a * (t[k] - t[0])));
      den += g * g;
    }
    c_out = den > 0.0 ? num / den : 0.0;
    double sse = 0.0;
    for (auto k : fit_idx) {
      const double e = std::exp(-a * (t[k] - t[0]));
      const double r = mean_energy[k] - ((m0 - c_out) * e + c_out);
      sse += r * r;
    }
    return sse;
  };
  double best_a = 0.0, best_sse = std::numeric_limits<double>::infinity();
  const double span = t[fit_idx.back()] - t[0];
  double c = 0.0;
  for (int i = 1; i <= 400; ++i) {
    const double a = (50.0 / span) * std::pow(1e-4, 1.0 - i / 400.0);  // log grid on [0.005/span, 50/span]
    const double sse = sse_for(a, c);
    if (sse < best_sse) {
      best_sse = sse;
      best_a = a;
    }
  }
  EnergyBoundFit fit;
  fit.rate = best_a;
  double c_hat = -std::numeric_limits<double>::infinity();
  for (auto k : fit_idx) c_hat = std::max(c_hat, mean_energy[k] - m0 * std::exp(-best_a * (t[k] - t[0])));
  fit.constant = c_hat;
  fit.t.assign(t.begin(), t.end());
  fit.mean.assign(mean_energy.begin(), mean_energy.end());
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double b = m0 * std::exp(-best_a * (t[k] - t[0])) + c_hat;
    fit.bound.push_back(b);
    if (t[k] > t_split + 1e-12) fit.max_excursion = std::max(fit.max_excursion, (mean_energy[k] - b) / std::abs(b));
  }
  return fit;
}

}  // namespace nlwmix
