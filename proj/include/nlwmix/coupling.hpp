#pragma once

// Foias-Prodi coupled pairs under shared noise. u solves the equation from
// y; the intermediate process v starts from y' and carries the pinning term
// P_N [f(u) - f(v)], so its kick force is (I - P_N) f(v) + P_N f(u). The
// Girsanov drift a(t) = P_N (0, f(u) - f(v)) controls the total-variation
// distance between the laws of v and of the solution from y'.

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
#include "nlwmix/energy.hpp"
#include "nlwmix/errors.hpp"
#include "nlwmix/integrator.hpp"
#include "nlwmix/model.hpp"
#include "nlwmix/norms.hpp"
#include "nlwmix/rng.hpp"
#include "nlwmix/stats.hpp"

namespace nlwmix {

struct CouplingParams {
  std::size_t N = 0;  // leading modes under P_N
  double T = 0.0;
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
  std::optional<double> epsilon;  // defaults to alpha / 2
  std::uint64_t record_every = 100;
  /// Bound mode: the drift is switched off after the first of the stopping
  /// times of u, u' (plain solution from y') and v.
  std::optional<StoppingParams> stopping;

  [[nodiscard]] double eps(const Model& m) const { return epsilon.value_or(0.5 * m.alpha()); }
};

/// Advances the (u, v) pair with one shared noise increment per step.
class PairStepper {
 public:
  PairStepper(const Model& m, const LinearPropagator& prop, std::size_t N)
      : prop_(&prop),
        N_(N),
        eval_u_(m.basis(), m.nonlinearity()),
        eval_v_(m.basis(), m.nonlinearity()),
        fu_(m.size()),
        fv_(m.size()),
        g_(m.size()) {
    if (N > m.size()) throw ConfigError("projection dimension N exceeds the mode count");
  }

  void reset(const State& u, const State& v) {
    eval_u_.evaluate_force(u.u, fu_);
    eval_v_.evaluate_force(v.u, fv_);
    mix();
  }

  void step(State& u, State& v, const NoiseIncrement& inc, std::uint64_t index) {
    const double half = 0.5 * prop_->dt();
    for (std::size_t j = 0; j < fu_.size(); ++j) {
      u.v[j] -= half * fu_[j];
      v.v[j] -= half * g_[j];
    }
    prop_->apply(u.u, u.v, inc.du, inc.dv);
    prop_->apply(v.u, v.v, inc.du, inc.dv);
    u.t += prop_->dt();
    v.t += prop_->dt();
    try {
      eval_u_.evaluate_force(u.u, fu_);
      eval_v_.evaluate_force(v.u, fv_);
    } catch (const DivergenceError&) {
      throw DivergenceError("coupled pair diverged", u.t, index);
    }
    mix();
    for (std::size_t j = 0; j < fu_.size(); ++j) {
      u.v[j] -= half * fu_[j];
      v.v[j] -= half * g_[j];
    }
  }

  /// |a|^2 = sum_{j < N} (f(u)_j - f(v)_j)^2 at the current states.
  [[nodiscard]] double drift_sq() const {
    double acc = 0.0;
    for (std::size_t j = 0; j < N_; ++j) acc += (fu_[j] - fv_[j]) * (fu_[j] - fv_[j]);
    return acc;
  }

  [[nodiscard]] double F_u() const { return eval_u_.cached_primitive(); }
  [[nodiscard]] double F_v() const { return eval_v_.cached_primitive(); }

 private:
  void mix() {
    for (std::size_t j = 0; j < g_.size(); ++j) g_[j] = j < N_ ? fu_[j] : fv_[j];
  }

  const LinearPropagator* prop_;
  std::size_t N_;
  NonlinearEvaluator eval_u_, eval_v_;
  std::vector<double> fu_, fv_, g_;
};

struct FpRate {
  double rate = 0.0;  // minus the slope of log |xi_v - xi_u|_H^2
  double r2 = 0.0;
  std::size_t points = 0;
  bool degenerate = false;
};

/// Least-squares slope of log diff_norm^2 on [t0, t1]. A zero difference in
/// the window makes the rate undefined.
inline FpRate fp_decay_rate(std::span<const double> t, std::span<const double> diff_norm, double t0, double t1) {
  if (t.size() != diff_norm.size()) throw SampleError("fp_decay_rate: length mismatch");
  std::vector<double> x, y;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t0 - 1e-12 || t[k] > t1 + 1e-12) continue;
    if (!(diff_norm[k] > 0.0)) return FpRate{0.0, 0.0, 0, true};
    x.push_back(t[k]);
    y.push_back(2.0 * std::log(diff_norm[k]));
  }
  if (x.size() < 3) throw SampleError("fp_decay_rate: window holds fewer than three points");
  const auto fit = stats::linear_fit(x, y);
  return FpRate{-fit.slope, fit.r2, x.size(), false};
}

struct FpReport {
  std::size_t N = 0;
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
  std::vector<double> times;
  std::vector<double> diff_norm;  // |xi_v - xi_u|_H
  std::vector<double> drift_sq;   // |a(t)|^2 with the stopping indicator applied
  double drift_l2 = 0.0;          // int_0^T |a|^2 dt on the step grid
  std::optional<double> tau_tilde;
  FpRate fit;
  double tv_bound = 0.0;  // single-pair plug-in of the Novikov bound
  bool failed = false;
  std::string failure;
};

struct FpPair {
  Trajectory u;
  Trajectory v;
  FpReport report;
};

inline double novikov_factor(std::span<const double> b, std::size_t N);

/// Simulates the pair (u from y, v from y2) on [0, T]. States are recorded
/// every cp.record_every steps when keep_states is set; the report always is.
inline FpPair simulate_fp_pair(const State& y, const State& y2, const Model& m, const CouplingParams& cp, double dt,
                               bool keep_states = true) {
  if (y.u.size() != m.size() || y2.u.size() != m.size()) throw ShapeError("initial states do not match the basis");
  if (cp.record_every == 0) throw ConfigError("record_every must be >= 1");
  const std::uint64_t steps = step_count(cp.T, dt);
  const LinearPropagator prop(m, dt);
  const NoiseSource noise(cp.seed, cp.stream);
  const auto& basis = m.basis();
  const double alpha = m.alpha();

  FpPair out;
  auto& rep = out.report;
  rep.N = cp.N;
  rep.seed = cp.seed;
  rep.stream = cp.stream;
  out.u.noise = out.v.noise = NoiseRecord{cp.seed, cp.stream, dt, steps};
  out.u.record_every = out.v.record_every = cp.record_every;

  State u = y, v = y2;
  PairStepper pair(m, prop, cp.N);
  // u' only matters for its stopping time.
  std::optional<State> u2;
  std::optional<Stepper> plain;
  std::optional<StoppingTracker> stop_u, stop_u2, stop_v;
  if (cp.stopping) {
    const double rate = cp.stopping->L + cp.stopping->M_rate;
    stop_u.emplace(alpha, rate, cp.stopping->r);
    stop_u2.emplace(alpha, rate, cp.stopping->r);
    stop_v.emplace(alpha, rate, cp.stopping->r);
    u2 = y2;
    plain.emplace(m, prop);
    plain->reset(*u2);
  }
  NoiseIncrement inc(m.size());
  bool active = true;
  double prev_a2 = 0.0;

  auto observe = [&](std::uint64_t k) {
    double a2 = pair.drift_sq();
    if (cp.stopping && active) {
      const double t = u.t;
      const bool hit_u = stop_u->update(t, energy_from_primitive(u, basis, alpha, pair.F_u()));
      const bool hit_v = stop_v->update(t, energy_from_primitive(v, basis, alpha, pair.F_v()));
      const bool hit_u2 = stop_u2->update(t, energy_from_primitive(*u2, basis, alpha, plain->F_integral()));
      if (hit_u || hit_v || hit_u2) {
        active = false;
        rep.tau_tilde = t;
      }
    }
    if (!active) a2 = 0.0;
    if (k > 0) rep.drift_l2 += 0.5 * dt * (a2 + prev_a2);
    prev_a2 = a2;
    if (k % cp.record_every == 0 || k == steps) {
      rep.times.push_back(u.t);
      rep.diff_norm.push_back(std::sqrt(phase_distance_sq(v, u, basis, alpha)));
      rep.drift_sq.push_back(a2);
      if (keep_states) {
        out.u.states.push_back(u);
        out.v.states.push_back(v);
      }
    }
  };

  try {
    pair.reset(u, v);
    observe(0);
    for (std::uint64_t k = 0; k < steps; ++k) {
      noise.draw(k, prop, inc);
      pair.step(u, v, inc, k + 1);
      u.t = v.t = y.t + static_cast<double>(k + 1) * dt;
      if (plain) {
        plain->step(*u2, inc, k + 1);
        u2->t = u.t;
      }
      observe(k + 1);
    }
  } catch (const DivergenceError& e) {
    rep.failed = out.u.failed = out.v.failed = true;
    rep.failure = e.what();
  }
  if (!rep.failed) {
    rep.fit = fp_decay_rate(rep.times, rep.diff_norm, 0.25 * cp.T, cp.T);
    bool forced = true;
    for (std::size_t j = 0; j < cp.N; ++j) forced = forced && m.noise_b()[j] > 0.0;
    if (rep.drift_l2 == 0.0) {
      rep.tv_bound = 0.0;
    } else if (!forced) {
      rep.tv_bound = std::numeric_limits<double>::infinity();  // no noise to absorb the drift
    } else {
      const double x = novikov_factor(m.noise_b(), cp.N) * rep.drift_l2;
      rep.tv_bound = 0.5 * std::sqrt(std::max(std::expm1(0.5 * x), 0.0));
    }
  }
  return out;
}

/// Runs pairs in parallel; pair i uses noise stream cp.stream + i and the
/// starts produced by starts(i).
inline std::vector<FpReport> simulate_fp_pairs(std::size_t n,
                                               const std::function<std::pair<State, State>(std::size_t)>& starts,
                                               const Model& m, const CouplingParams& cp, double dt,
                                               unsigned threads = 0) {
  std::vector<FpReport> reports(n);
  parallel_for(n, resolve_threads(threads), [&](std::size_t i) {
    CouplingParams local = cp;
    local.stream = cp.stream + static_cast<std::uint32_t>(i);
    const auto [y, y2] = starts(i);
    reports[i] = simulate_fp_pair(y, y2, m, local, dt, false).report;
  });
  return reports;
}

struct GirsanovDrift {
  std::vector<double> times;
  std::vector<std::vector<double>> a;  // [time][j < N], velocity components
  std::vector<double> norm_sq;
  double drift_l2 = 0.0;
};

/// a(t) = 1_{t <= tau} P_N (0, f(u) - f(v)) on the stored grid, with the L2
/// integral by trapezoid. No tau means the indicator is always on.
inline GirsanovDrift girsanov_drift(const Trajectory& traj_u, const Trajectory& traj_v, const Model& m,
                                    std::size_t N, std::optional<double> tau = std::nullopt) {
  if (traj_u.states.size() != traj_v.states.size()) throw ShapeError("trajectories do not share a grid");
  if (N > m.size()) throw ConfigError("projection dimension N exceeds the mode count");
  NonlinearEvaluator eval(m.basis(), m.nonlinearity());
  std::vector<double> fu(m.size()), fv(m.size());
  GirsanovDrift out;
  for (std::size_t k = 0; k < traj_u.states.size(); ++k) {
    const auto& su = traj_u.states[k];
    const auto& sv = traj_v.states[k];
    if (std::abs(su.t - sv.t) > 1e-9) throw ShapeError("trajectories do not share a grid");
    eval.evaluate(su.u, fu);
    eval.evaluate(sv.u, fv);
    std::vector<double> a(N, 0.0);
    double n2 = 0.0;
    if (!tau || su.t <= *tau) {
      for (std::size_t j = 0; j < N; ++j) {
        a[j] = fu[j] - fv[j];
        n2 += a[j] * a[j];
      }
    }
    if (k > 0) out.drift_l2 += 0.5 * (su.t - out.times.back()) * (n2 + out.norm_sq.back());
    out.times.push_back(su.t);
    out.a.push_back(std::move(a));
    out.norm_sq.push_back(n2);
  }
  return out;
}

/// 6 max_{j <= N} b_j^{-1}; zero for N = 0, where the drift vanishes.
inline double novikov_factor(std::span<const double> b, std::size_t N) {
  if (N > b.size()) throw ConfigError("projection dimension N exceeds the mode count");
  double worst = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    if (!(b[j] > 0.0)) {
      throw ConfigError("noise coefficient b_" + std::to_string(j + 1) +
                        " is zero inside the projected modes; the total-variation bound is vacuous");
    }
    worst = std::max(worst, 1.0 / b[j]);
  }
  return 6.0 * worst;
}

struct TvBound {
  double bound = 0.0;
  double log_mean_exp = 0.0;  // log E exp(c int |a|^2)
  double max_exponent = 0.0;  // largest c int |a|^2 over the samples
};

/// (1/2) ((E exp[c int |a|^2])^{1/2} - 1)^{1/2} with c = 6 max_{j<=N} 1/b_j,
/// the expectation estimated by the sample mean (log-sum-exp).
inline TvBound novikov_tv_bound(std::span<const double> drift_l2_samples, std::span<const double> b, std::size_t N) {
  if (drift_l2_samples.empty()) throw SampleError("novikov_tv_bound: no samples");
  const double c = novikov_factor(b, N);
  TvBound out;
  double top = -std::numeric_limits<double>::infinity();
  for (double x : drift_l2_samples) {
    if (x < 0.0) throw SampleError("drift integral must be nonnegative");
    top = std::max(top, c * x);
  }
  double acc = 0.0;
  for (double x : drift_l2_samples) acc += std::exp(c * x - top);
  out.max_exponent = top;
  out.log_mean_exp = top + std::log(acc / static_cast<double>(drift_l2_samples.size()));
  out.bound = 0.5 * std::sqrt(std::max(std::expm1(0.5 * out.log_mean_exp), 0.0));
  return out;
}

/// Summary of one N in a Foias-Prodi scan.
struct FpScanRow {
  std::size_t N = 0;
  double amplitude = 0.0;
  std::size_t pairs = 0;
  std::size_t failures = 0;
  std::size_t degenerate = 0;
  double median_rate = 0.0;
  double min_rate = 0.0;
  double min_r2 = 0.0;
  double pass_fraction = 0.0;  // share of pairs with rate >= threshold and R^2 >= r2_min
  bool contracts = false;      // every pair passed
};

inline FpScanRow summarize_fp(std::size_t N, double amplitude, const std::vector<FpReport>& reps, double threshold,
                              double r2_min) {
  FpScanRow row;
  row.N = N;
  row.amplitude = amplitude;
  row.pairs = reps.size();
  std::vector<double> rates;
  row.min_rate = std::numeric_limits<double>::infinity();
  row.min_r2 = std::numeric_limits<double>::infinity();
  std::size_t pass = 0;
  for (const auto& r : reps) {
    if (r.failed) {
      ++row.failures;
      continue;
    }
    if (r.fit.degenerate) {
      ++row.degenerate;
      continue;
    }
    rates.push_back(r.fit.rate);
    row.min_rate = std::min(row.min_rate, r.fit.rate);
    row.min_r2 = std::min(row.min_r2, r.fit.r2);
    if (r.fit.rate >= threshold && r.fit.r2 >= r2_min) ++pass;
  }
  row.median_rate = rates.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::median(rates);
  row.pass_fraction = reps.empty() ? 0.0 : static_cast<double>(pass) / static_cast<double>(reps.size());
  row.contracts = !reps.empty() && pass == reps.size();
  return row;
}

/// Smallest N in the scan from which every larger scanned N contracts.
inline std::optional<std::size_t> locate_n_star(const std::vector<FpScanRow>& rows) {
  std::vector<FpScanRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.N < b.N; });
  std::optional<std::size_t> n_star;
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    if (!it->contracts) break;
    n_star = it->N;
  }
  return n_star;
}

/// Random unit direction in H over the first `modes` modes (H-orthonormal
/// coordinates), drawn from stream `stream` of `seed`.
inline State random_h_direction(const Model& m, std::size_t modes, std::uint64_t seed, std::uint32_t stream) {
  modes = std::min(modes, m.size());
  const GaussianStream g(seed, stream);
  std::vector<double> p(m.size(), 0.0), q(m.size(), 0.0);
  double norm = 0.0;
  for (std::size_t j = 0; j < modes; ++j) {
    const auto [a, b] = g.normal_pair(0, static_cast<std::uint32_t>(j));
    p[j] = a;
    q[j] = b;
    norm += a * a + b * b;
  }
  norm = std::sqrt(norm);
  for (std::size_t j = 0; j < modes; ++j) {
    p[j] /= norm;
    q[j] /= norm;
  }
  return from_h_coordinates(p, q, m.basis(), m.alpha());
}

}  // namespace nlwmix
