#pragma once

// Experiment drivers behind the command-line tool. Each driver turns a
// validated configuration into CSV tables, a quantity/value summary and a
// list of threshold checks; write_experiment() puts them on disk together
// with a manifest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "nlwmix/config.hpp"
#include "nlwmix/coupling.hpp"
#include "nlwmix/csv.hpp"
#include "nlwmix/energy.hpp"
#include "nlwmix/ensemble.hpp"
#include "nlwmix/ergodics.hpp"
#include "nlwmix/integrator.hpp"
#include "nlwmix/model.hpp"
#include "nlwmix/stats.hpp"
#include "nlwmix/version.hpp"

namespace nlwmix {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct ExperimentOutput {
  std::vector<std::pair<std::string, CsvTable>> tables;
  CsvTable summary{{"quantity", "value"}};
  std::vector<Check> checks;

  void note(const std::string& key, double value) { summary.add(key, value); }
  void check(const std::string& name, bool passed, double value, double threshold) {
    checks.push_back({name, passed, value, threshold});
  }
  [[nodiscard]] bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
  [[nodiscard]] const CsvTable& table(const std::string& file) const {
    for (const auto& [name, t] : tables) {
      if (name == file) return t;
    }
    throw ShapeError("experiment produced no " + file);
  }
  [[nodiscard]] double summary_value(const std::string& key) const {
    for (std::size_t r = 0; r < summary.rows.size(); ++r) {
      if (summary.rows[r][0] == key) return summary.number(r, 1);
    }
    throw ShapeError("summary has no quantity '" + key + "'");
  }
};

namespace detail {

// Stream blocks, so that ensembles inside one experiment never share noise.
constexpr std::uint32_t kCalibrationStreams = 1u << 22;
constexpr std::uint32_t kPilotStream = 1u << 23;

inline State start_state(const Model& m, double norm) {
  return norm == 0.0 ? State::zero(m.size()) : mode_one_state(m, norm);
}

inline StateFunctional clipped_first_mode(double clip) {
  return [clip](const State& s) { return std::clamp(s.u[0], -clip, clip); };
}

inline double calibrate_K(const ExperimentConfig& cfg, const Model& m, const State& y0, unsigned threads) {
  if (auto K = cfg.optional_number("K")) return *K;
  EnsembleOptions opt;
  opt.threads = threads;
  opt.first_stream = kCalibrationStreams;
  const auto cal = simulate_ensemble(y0, m, cfg.count("calibration_n", 128), cfg.run.T, cfg.run.dt, cfg.run.seed,
                                     uniform_checkpoints(cfg.run.T, cfg.run.checkpoint_step), opt);
  return estimate_energy_constant(cal, m);
}

inline double reference_value(const ExperimentConfig& cfg, const Model& m, const StateFunctional& psi,
                              ExperimentOutput& out) {
  const std::string ref = cfg.text("reference", "pilot");
  if (ref != "pilot") return cfg.number("reference", 0.0);
  const double value = time_average(State::zero(m.size()), m, cfg.number("pilot_T", 1e4), cfg.run.dt, cfg.run.seed,
                                    psi, cfg.number("burn_in", 100.0), kPilotStream);
  out.note("pilot_T", cfg.number("pilot_T", 1e4));
  return value;
}

inline std::vector<std::size_t> as_counts(const std::vector<double>& xs, const std::string& key) {
  std::vector<std::size_t> out;
  for (double x : xs) {
    if (x < 0.0 || x != std::floor(x)) throw ConfigError("'" + key + "' expects nonnegative integers");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

}  // namespace detail

inline ExperimentOutput run_energy(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const State y0 = detail::start_state(m, cfg.number("y0_norm", 5.0));
  EnsembleOptions opt;
  opt.threads = threads;
  const auto ens = simulate_ensemble(y0, m, r.n, r.T, r.dt, r.seed, uniform_checkpoints(r.T, r.checkpoint_step), opt);

  std::vector<double> t = ens.checkpoints, mean_e, se_e, mean_st;
  for (std::size_t c = 0; c < t.size(); ++c) {
    const auto e = ens.energy_marginal(c);
    mean_e.push_back(stats::mean(e));
    se_e.push_back(e.size() > 1 ? stats::standard_error(e) : 0.0);
    const auto st = ens.marginal(c, [&m](const State& s) { return energy_standard(s, m); });
    mean_st.push_back(stats::mean(st));
  }
  const double split = cfg.number("fit_split", 0.5 * r.T);
  const auto fit = fit_energy_bound(t, mean_e, split);
  CsvTable energy({"t", "mean_energy", "se", "mean_energy_standard", "bound"});
  for (std::size_t c = 0; c < t.size(); ++c) energy.add(t[c], mean_e[c], se_e[c], mean_st[c], fit.bound[c]);
  out.tables.emplace_back("energy.csv", std::move(energy));
  out.note("paths", static_cast<double>(ens.n - ens.failures));
  out.note("fit_rate", fit.rate);
  out.note("fit_constant", fit.constant);
  out.note("max_excursion", fit.max_excursion);
  const double tol = cfg.number("excursion_tol", 0.05);
  out.check("energy_bound", fit.rate > 0.0 && fit.max_excursion <= tol, fit.max_excursion, tol);

  if (m.has_noise()) {
    const double kappa = cfg.number("kappa", m.alpha() / (2.0 * m.noise_B()));
    const auto series = exp_moment_series(ens, kappa, m);
    const auto trend = exp_moment_trend(ens, kappa, 0.5 * r.T, r.T);
    std::vector<double> late;
    for (std::size_t c = 0; c < t.size(); ++c) {
      if (t[c] >= 0.5 * r.T - 1e-12) late.push_back(series.value[c]);
    }
    const double cap = 3.0 * stats::median(late);
    CsvTable moment({"t", "value", "ci_lo", "ci_hi", "bound"});
    for (std::size_t c = 0; c < t.size(); ++c) moment.add(t[c], series.value[c], series.ci_lo[c], series.ci_hi[c], cap);
    out.tables.emplace_back("exp_moment.csv", std::move(moment));
    out.note("kappa", kappa);
    out.note("trend_slope", trend.slope);
    out.note("trend_ci_lo", trend.ci_lo);
    out.note("trend_ci_hi", trend.ci_hi);
    out.note("max_over_median", trend.max_over_median);
    out.check("exp_moment_no_trend", trend.ci_lo <= 0.0, trend.ci_lo, 0.0);
    out.check("exp_moment_bounded", trend.max_over_median <= 3.0, trend.max_over_median, 3.0);
  } else {
    double rise = 0.0, scale = 0.0;
    for (std::size_t c = 0; c < t.size(); ++c) scale = std::max(scale, std::abs(mean_st[c]));
    for (std::size_t c = 1; c < t.size(); ++c) rise = std::max(rise, mean_st[c] - mean_st[c - 1]);
    out.note("max_energy_standard_rise", rise);
    if (std::all_of(m.h().begin(), m.h().end(), [](double x) { return x == 0.0; })) {
      const double allowed = 1e-12 * std::max(scale, 1.0);
      out.check("energy_standard_monotone", rise <= allowed, rise, allowed);
    }
  }
  return out;
}

inline ExperimentOutput run_tails(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const State y0 = detail::start_state(m, cfg.number("y0_norm", 5.0));
  const double K = detail::calibrate_K(cfg, m, y0, threads);
  const auto p = make_stopping_params(m, K);
  EnsembleOptions opt;
  opt.threads = threads;
  opt.keep_states = false;
  opt.monitor = tail_monitor(m, r.dt, p);
  const auto ens = simulate_ensemble(y0, m, r.n, r.T, r.dt, r.seed, {r.T}, opt);
  const auto grid = cfg.list("r_grid", {2, 4, 8, 16});
  const auto rep = supermartingale_tail(ens, p, m, grid, cfg.number("tolerance", 0.0), cfg.number("level", 0.95));
  CsvTable tails({"r", "value", "ci_lo", "ci_hi", "bound"});
  for (std::size_t k = 0; k < rep.r_grid.size(); ++k) {
    tails.add(rep.r_grid[k], rep.empirical[k], rep.ci_lo[k], rep.ci_hi[k], rep.bound[k]);
    out.check("tail_r=" + format_number(rep.r_grid[k]), rep.pass[k], rep.ci_hi[k], rep.bound[k]);
  }
  out.tables.emplace_back("tails.csv", std::move(tails));
  out.note("paths", static_cast<double>(rep.paths));
  out.note("K", K);
  out.note("beta", p.beta);
  out.note("L", p.L);
  out.note("M", p.M_rate);
  out.note("r_stop", p.r);
  out.note("stopping_frequency", rep.stopping_frequency);
  out.note("stopping_bound", rep.stopping_bound);
  return out;
}

inline ExperimentOutput run_fp_scan(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const auto Ns = detail::as_counts(cfg.list("N_list", {0, 1, 2, 4, 8, 16}), "N_list");
  const double amplitude = cfg.number("amplitude", 1.5);
  const double distance = cfg.number("distance", 0.5);
  const auto fail_amp = cfg.optional_number("fail_amplitude");
  const std::size_t pairs = cfg.count("pairs", 32);
  const std::size_t traces = std::min(cfg.count("trace_pairs", 4), pairs);
  const double t0 = cfg.number("fit_t0", 0.25 * r.T);
  const double r2_min = cfg.number("r2_min", 0.9);
  CouplingParams base;
  base.T = r.T;
  base.seed = r.seed;
  base.record_every = r.record_every;
  const double threshold = base.eps(m);
  const std::uint64_t dir_seed = mix_seed(r.seed);

  CsvTable pair_table({"N", "amplitude", "pair", "seed", "stream", "fitted_rate", "r2", "drift_l2", "tv_bound"});
  CsvTable trace_table({"N", "amplitude", "pair", "t", "diff_norm"});
  auto scan = [&](std::size_t N, double amp) {
    CouplingParams cp = base;
    cp.N = N;
    auto starts = [&](std::size_t i) {
      const State y = mode_one_state(m, amp);
      return std::pair{y, axpy(y, distance, random_h_direction(m, m.size(), dir_seed, static_cast<std::uint32_t>(i)))};
    };
    std::vector<FpReport> reps(pairs);
    parallel_for(pairs, resolve_threads(threads), [&](std::size_t i) {
      CouplingParams local = cp;
      local.stream = static_cast<std::uint32_t>(i);
      const auto [y, y2] = starts(i);
      reps[i] = simulate_fp_pair(y, y2, m, local, r.dt, false).report;
      if (!reps[i].failed && std::abs(t0 - 0.25 * r.T) > 1e-12) {
        reps[i].fit = fp_decay_rate(reps[i].times, reps[i].diff_norm, t0, r.T);
      }
    });
    for (std::size_t i = 0; i < pairs; ++i) {
      const auto& rep = reps[i];
      const double nan = std::numeric_limits<double>::quiet_NaN();
      const bool usable = !rep.failed && !rep.fit.degenerate;
      pair_table.add(N, amp, i, rep.seed, rep.stream, usable ? rep.fit.rate : nan, usable ? rep.fit.r2 : nan,
                     rep.drift_l2, rep.tv_bound);
      if (i < traces) {
        for (std::size_t k = 0; k < rep.times.size(); ++k) trace_table.add(N, amp, i, rep.times[k], rep.diff_norm[k]);
      }
    }
    return summarize_fp(N, amp, reps, threshold, r2_min);
  };

  std::vector<FpScanRow> rows;
  for (std::size_t N : Ns) rows.push_back(scan(N, amplitude));
  const auto n_star = locate_n_star(rows);
  std::optional<FpScanRow> fail_row;
  if (fail_amp) fail_row = scan(0, *fail_amp);

  CsvTable table({"N", "amplitude", "pairs", "failures", "degenerate", "median_rate", "min_rate", "min_r2",
                  "pass_fraction", "contracts", "threshold", "n_star"});
  const double n_star_cell = n_star ? static_cast<double>(*n_star) : -1.0;
  auto emit = [&](const FpScanRow& row) {
    table.add(row.N, row.amplitude, row.pairs, row.failures, row.degenerate, row.median_rate, row.min_rate,
              row.min_r2, row.pass_fraction, row.contracts, threshold, n_star_cell);
  };
  for (const auto& row : rows) emit(row);
  if (fail_row) emit(*fail_row);
  out.tables.emplace_back("fp_scan.csv", std::move(table));
  out.tables.emplace_back("fp_pairs.csv", std::move(pair_table));
  out.tables.emplace_back("fp_traces.csv", std::move(trace_table));

  // |(I - P_N) f| along the free damped flow, as a supplementary diagnostic.
  const std::vector<double> times{0.0, 0.25 * r.T, 0.5 * r.T, r.T};
  const auto tail = projection_tail(m, mode_one_state(m, amplitude), times, Ns);
  CsvTable proj({"t", "N", "tail_norm"});
  for (std::size_t a = 0; a < times.size(); ++a) {
    for (std::size_t b = 0; b < Ns.size(); ++b) proj.add(times[a], Ns[b], tail[a][b]);
  }
  out.tables.emplace_back("fp_projection.csv", std::move(proj));

  out.note("threshold", threshold);
  out.note("n_star", n_star_cell);
  out.check("n_star_found", n_star.has_value() && *n_star <= 16, n_star_cell, 16.0);
  if (fail_row) {
    const bool fails = !fail_row->contracts || !(fail_row->median_rate > 0.0);
    out.note("fail_regime_pass_fraction", fail_row->pass_fraction);
    out.note("fail_regime_median_rate", fail_row->median_rate);
    out.check("n0_fail_regime", fails, fail_row->pass_fraction, 1.0);
  }
  return out;
}

inline ExperimentOutput run_girsanov(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const std::size_t N = cfg.count("N", 4);
  const auto deltas = cfg.list("deltas", {0.01, 0.02, 0.04});
  const std::size_t pairs = cfg.count("pairs", 64);
  const double amplitude = cfg.number("amplitude", 1.5);
  const std::string mode = cfg.text("mode", "bound");
  if (mode != "bound" && mode != "diagnostic") throw ConfigError("girsanov mode must be 'bound' or 'diagnostic'");
  const State y = mode_one_state(m, amplitude);
  CouplingParams cp;
  cp.N = N;
  cp.T = r.T;
  cp.seed = r.seed;
  cp.record_every = r.record_every;
  if (mode == "bound") {
    const double K = detail::calibrate_K(cfg, m, y, threads);
    cp.stopping = make_stopping_params(m, K);
    out.note("K", K);
  }
  const std::uint64_t dir_seed = mix_seed(r.seed);

  CsvTable table({"delta", "pairs", "mean_drift_l2", "max_exponent", "tv_bound"});
  CsvTable pair_table({"delta", "pair", "drift_l2", "tau_tilde", "tv_bound"});
  std::vector<double> bounds;
  for (double delta : deltas) {
    auto reps = simulate_fp_pairs(
        pairs,
        [&](std::size_t i) {
          return std::pair{y, axpy(y, delta, random_h_direction(m, m.size(), dir_seed, static_cast<std::uint32_t>(i)))};
        },
        m, cp, r.dt, threads);
    std::vector<double> samples;
    for (std::size_t i = 0; i < reps.size(); ++i) {
      if (reps[i].failed) continue;
      samples.push_back(reps[i].drift_l2);
      pair_table.add(delta, i, reps[i].drift_l2, reps[i].tau_tilde.value_or(std::numeric_limits<double>::quiet_NaN()),
                     reps[i].tv_bound);
    }
    const auto tv = novikov_tv_bound(samples, m.noise_b(), N);
    bounds.push_back(tv.bound);
    table.add(delta, samples.size(), stats::mean(samples), tv.max_exponent, tv.bound);
  }
  out.tables.emplace_back("girsanov.csv", std::move(table));
  out.tables.emplace_back("girsanov_pairs.csv", std::move(pair_table));

  const auto fit = stats::fit_through_origin(deltas, bounds);
  out.note("N", static_cast<double>(N));
  out.note("slope", fit.slope);
  out.note("r2", fit.r2);
  const double r2_min = cfg.number("r2_min", 0.9);
  out.check("tv_linear_in_distance", fit.r2 >= r2_min, fit.r2, r2_min);

  // Identical starts under shared noise: no drift, so the bound is exactly 0.
  CouplingParams same = cp;
  same.stream = static_cast<std::uint32_t>(pairs);
  const auto twin = simulate_fp_pair(y, y, m, same, r.dt, false).report;
  const double zero_bound = novikov_tv_bound(std::vector<double>{twin.drift_l2}, m.noise_b(), N).bound;
  double max_diff = 0.0;
  for (double d : twin.diff_norm) max_diff = std::max(max_diff, d);
  out.note("identical_start_bound", zero_bound);
  out.note("identical_start_max_diff", max_diff);
  out.check("zero_drift_zero_bound", zero_bound == 0.0 && twin.drift_l2 == 0.0, zero_bound, 0.0);
  return out;
}

inline ExperimentOutput run_mixing(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const State ya = detail::start_state(m, cfg.number("y0_norm", 5.0));
  const State yb = detail::start_state(m, cfg.number("y0b_norm", 0.0));
  const auto obs = default_observables(m, cfg.count("observable_modes", 8), cfg.number("clip", 10.0));
  const double t0 = cfg.number("fit_t0", 10.0);
  const double t1 = cfg.number("fit_t1", std::min(80.0, r.T));
  const auto run = mixing_rate(ya, yb, m, obs, r.n, r.T, r.dt, r.seed, uniform_checkpoints(r.T, r.checkpoint_step),
                               t0, t1, threads);
  const auto& rep = run.report;
  CsvTable table({"t", "observable", "w1", "ci"});
  for (std::size_t c = 0; c < rep.times.size(); ++c) {
    for (std::size_t o = 0; o < rep.observables.size(); ++o) {
      table.add(rep.times[c], rep.observables[o], rep.w1[o][c], rep.floor[o][c]);
    }
    table.add(rep.times[c], "pooled", rep.pooled[c], rep.pooled_floor[c]);
  }
  out.tables.emplace_back("mixing.csv", std::move(table));
  out.note("kappa", rep.kappa);
  out.note("prefactor", rep.prefactor);
  out.note("r2", rep.r2);
  out.note("fit_t0", t0);
  out.note("fit_t1", t1);
  out.note("degenerate", rep.degenerate ? 1.0 : 0.0);
  // Distance at the end of the fit window against the noise floor there.
  std::size_t end = 0;
  for (std::size_t c = 0; c < rep.times.size(); ++c) {
    if (rep.times[c] <= t1 + 1e-12) end = c;
  }
  const double factor = cfg.number("floor_factor", 3.0);
  out.note("pooled_at_t1", rep.pooled[end]);
  out.note("floor_at_t1", rep.pooled_floor[end]);
  const double r2_min = cfg.number("r2_min", 0.9);
  out.check("mixing_rate_positive", !rep.degenerate && rep.kappa > 0.0 && rep.r2 >= r2_min, rep.r2, r2_min);
  out.check("mixing_reaches_floor", rep.pooled[end] <= factor * rep.pooled_floor[end], rep.pooled[end],
            factor * rep.pooled_floor[end]);
  return out;
}

inline ExperimentOutput run_lln(const ExperimentConfig& cfg, const Model& m, unsigned) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const auto psi = detail::clipped_first_mode(cfg.number("clip", 10.0));
  const double ref = detail::reference_value(cfg, m, psi, out);
  const auto curve = lln_run(State::zero(m.size()), m, r.T, r.dt, r.seed, psi, ref, cfg.number("burn_in", 100.0),
                             cfg.number("t_min", 1.0), cfg.number("t_fit_min", 64.0));
  CsvTable table({"t", "err"});
  CsvTable env({"t", "envelope"});
  for (std::size_t k = 0; k < curve.t.size(); ++k) {
    table.add(curve.t[k], curve.err[k]);
    env.add(curve.t[k], curve.envelope[k]);
  }
  out.tables.emplace_back("lln.csv", std::move(table));
  out.tables.emplace_back("lln_envelope.csv", std::move(env));
  out.note("reference", ref);
  out.note("slope", curve.slope);
  out.note("r2", curve.r2);
  out.note("envelope_slope", curve.envelope_slope);
  out.note("envelope_r2", curve.envelope_r2);
  const double slope_max = cfg.number("slope_max", -0.35);
  out.check("lln_slope", curve.envelope_slope <= slope_max, curve.envelope_slope, slope_max);
  return out;
}

inline ExperimentOutput run_clt(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const auto psi = detail::clipped_first_mode(cfg.number("clip", 10.0));
  const double ref = detail::reference_value(cfg, m, psi, out);
  const double t_eval = cfg.number("t_eval", r.T);
  if (!(t_eval > 0.0) || t_eval > r.T) throw ConfigError("t_eval must lie in (0, T]");
  EnsembleOptions opt;
  opt.threads = threads;
  opt.keep_states = false;
  opt.integrands = {psi};
  const auto ens = simulate_ensemble(detail::start_state(m, cfg.number("y0_norm", 0.0)), m, r.n, t_eval, r.dt, r.seed,
                                     {t_eval}, opt);
  const auto rep = clt_statistic(ens, 0, ens.checkpoints.size() - 1, ref);
  CsvTable table({"level", "sample_quantile", "normal_quantile", "ks", "p_value"});
  auto sorted = rep.samples;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const double level = (static_cast<double>(k) + 0.5) / static_cast<double>(sorted.size());
    table.add(level, sorted[k], rep.sigma * stats::normal_quantile(level), rep.ks, rep.p_value);
  }
  out.tables.emplace_back("clt.csv", std::move(table));
  out.note("reference", ref);
  out.note("t", rep.t);
  out.note("mean", rep.mean);
  out.note("sigma", rep.sigma);
  out.note("ks", rep.ks);
  out.note("p_value", rep.p_value);
  const double p_min = cfg.number("p_min", 0.01);
  out.check("clt_normal", !rep.degenerate && rep.p_value > p_min, rep.p_value, p_min);
  return out;
}

inline ExperimentOutput run_hitting(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const auto ds = cfg.list("d", {0.5});
  const State y0 = detail::start_state(m, cfg.number("y0_norm", 5.0));
  EnsembleOptions opt;
  opt.threads = threads;
  const double d_first = ds.front();
  opt.monitor = [&m, d_first, dt = r.dt] { return std::make_unique<FirstHitMonitor>(m, d_first, dt); };
  const auto ens = simulate_ensemble(y0, m, r.n, r.T, r.dt, r.seed, {r.T}, opt);
  CsvTable table({"d", "T", "p_hat", "ci_lo", "ci_hi"});
  for (double d : ds) {
    const auto rep = hitting_from_ensemble(ens, m, d);
    table.add(d, rep.T, rep.estimate.estimate, rep.estimate.lo, rep.estimate.hi);
    out.check("hitting_d=" + format_number(d), rep.estimate.estimate > 0.0 && rep.estimate.lo > 0.0, rep.estimate.lo,
              0.0);
  }
  const auto first = hitting_from_ensemble(ens, m, d_first);
  CsvTable hist({"t_lo", "t_hi", "count"});
  for (std::size_t k = 0; k < first.histogram.size(); ++k) {
    hist.add(first.histogram_edges[k], first.histogram_edges[k + 1], first.histogram[k]);
  }
  out.tables.emplace_back("hitting.csv", std::move(table));
  out.tables.emplace_back("hitting_first.csv", std::move(hist));
  out.note("paths", static_cast<double>(first.n));
  out.note("noise_modes", static_cast<double>(std::count_if(m.noise_b().begin(), m.noise_b().end(),
                                                            [](double b) { return b > 0.0; })));
  return out;
}

inline ExperimentOutput run_split(const ExperimentConfig& cfg, const Model& m, unsigned threads) {
  ExperimentOutput out;
  const auto& r = cfg.run;
  const double s = cfg.number("s", 0.4);
  check_split_index(m, s);
  const State y0 = detail::start_state(m, cfg.number("y0_norm", 0.0));
  std::vector<Trajectory> paths(r.n);
  std::vector<SplitReport> reps(r.n);
  parallel_for(r.n, resolve_threads(threads), [&](std::size_t i) {
    PathOptions po;
    po.stream = static_cast<std::uint32_t>(i);
    po.record_every = r.record_every;
    paths[i] = simulate_path(y0, m, r.T, r.dt, r.seed, po);
    reps[i] = split_uz_hs(paths[i], m, s);
  });
  const std::size_t nt = reps.front().times.size();
  std::vector<double> rms(nt, 0.0);
  double split_err = 0.0, replay_err = 0.0;
  for (const auto& rep : reps) {
    if (rep.times.size() != nt) throw DivergenceError("a split path diverged", r.T, 0);
    for (std::size_t k = 0; k < nt; ++k) rms[k] += rep.hs_norm[k] * rep.hs_norm[k];
    split_err = std::max(split_err, rep.max_split_error);
    replay_err = std::max(replay_err, rep.max_replay_error);
  }
  CsvTable table({"t", "hs_norm"});
  double first = 0.0, second = 0.0;
  for (std::size_t k = 0; k < nt; ++k) {
    rms[k] = std::sqrt(rms[k] / static_cast<double>(r.n));
    const double t = reps.front().times[k];
    table.add(t, rms[k]);
    if (t <= 0.5 * r.T + 1e-12) first = std::max(first, rms[k]);
    if (t >= 0.5 * r.T - 1e-12) second = std::max(second, rms[k]);
  }
  out.tables.emplace_back("split.csv", std::move(table));

  // Lipschitz-type bound on pairs of recorded states.
  std::vector<std::pair<State, State>> pairs;
  for (std::size_t i = 0; i < r.n; ++i) {
    const auto& a = paths[i].states;
    const auto& b = paths[(i + 1) % r.n].states;
    for (std::size_t k = 1; k < a.size(); k += std::max<std::size_t>(1, a.size() / 64)) {
      pairs.emplace_back(a[k], r.n > 1 ? b[k] : a[k - 1]);
    }
  }
  const auto lip = lipschitz_check(m, pairs);

  const double ratio = first > 0.0 ? second / first : std::numeric_limits<double>::infinity();
  out.note("s", s);
  out.note("max_first_half", first);
  out.note("max_second_half", second);
  out.note("ratio", ratio);
  out.note("max_split_error", split_err);
  out.note("max_replay_error", replay_err);
  out.note("lipschitz_s", lip.s);
  out.note("lipschitz_c1_half", lip.c1_half);
  out.note("lipschitz_c1_full", lip.c1_full);
  const double ratio_max = cfg.number("ratio_max", 1.5);
  out.check("hs_bounded", ratio <= ratio_max, ratio, ratio_max);
  out.check("split_consistent", std::max(split_err, replay_err) <= 1e-10, std::max(split_err, replay_err), 1e-10);
  return out;
}

inline ExperimentOutput run_dissipativity(const ExperimentConfig& cfg, const Model& m, unsigned) {
  ExperimentOutput out;
  const double range = cfg.number("range", 50.0);
  const auto rep = check_dissipativity(m.nonlinearity(), m.nu(), std::max(range, 4.0 / m.nu()));
  CsvTable table({"quantity", "value"});
  table.add("nu", m.nu());
  table.add("c_lower", rep.c_lower);
  table.add("c_virial", rep.c_virial);
  table.add("c_growth", rep.c_growth);
  table.add("constant", rep.constant);
  table.add("holds", rep.holds);
  table.add("alpha", m.alpha());
  table.add("noise_B", m.noise_B());
  table.add("noise_sup_b2", m.noise_sup_b2());
  out.tables.emplace_back("dissipativity.csv", std::move(table));
  out.note("constant", rep.constant);
  out.check("dissipative", rep.holds && std::isfinite(rep.constant), rep.constant,
            std::numeric_limits<double>::infinity());
  return out;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& cfg, unsigned threads = 0) {
  const Model m = build_model(cfg.model);
  const std::string& e = cfg.experiment;
  ExperimentOutput out;
  if (e == "energy") out = run_energy(cfg, m, threads);
  else if (e == "tails") out = run_tails(cfg, m, threads);
  else if (e == "fp-scan") out = run_fp_scan(cfg, m, threads);
  else if (e == "girsanov") out = run_girsanov(cfg, m, threads);
  else if (e == "mixing") out = run_mixing(cfg, m, threads);
  else if (e == "lln") out = run_lln(cfg, m, threads);
  else if (e == "clt") out = run_clt(cfg, m, threads);
  else if (e == "hitting") out = run_hitting(cfg, m, threads);
  else if (e == "split") out = run_split(cfg, m, threads);
  else if (e == "dissipativity") out = run_dissipativity(cfg, m, threads);
  else throw ConfigError("unknown experiment '" + e + "'");
  out.note("alpha", m.alpha());
  out.note("gamma", m.gamma());
  out.note("c_diss", m.c_diss());
  out.note("noise_B", m.noise_B());
  return out;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

/// Writes every table, summary.csv, checks.csv and manifest.json into `dir`.
/// The wall-clock time goes to timestamp.txt so the rest stays reproducible.
inline std::vector<std::string> write_experiment(const ExperimentConfig& cfg, const ExperimentOutput& out,
                                                 const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& [name, table] : out.tables) files.emplace_back(name, table.str());
  files.emplace_back("summary.csv", out.summary.str());
  CsvTable checks({"check", "passed", "value", "threshold"});
  for (const auto& c : out.checks) checks.add(c.name, c.passed, c.value, c.threshold);
  files.emplace_back("checks.csv", checks.str());

  nlohmann::ordered_json manifest;
  manifest["tool"] = "nlwmix";
  manifest["version"] = kVersion;
  manifest["experiment"] = cfg.experiment;
  manifest["config_fnv1a"] = hex64(fnv1a(cfg.source));
  manifest["seed"] = cfg.run.seed;
  manifest["dt"] = cfg.run.dt;
  manifest["T"] = cfg.run.T;
  manifest["n"] = cfg.run.n;
  manifest["config"] = cfg.source;
  nlohmann::ordered_json listing = nlohmann::ordered_json::array();
  std::vector<std::string> written;
  for (const auto& [name, text] : files) {
    write_text((std::filesystem::path(dir) / name).string(), text);
    listing.push_back({{"file", name}, {"fnv1a", hex64(fnv1a(text))}});
    written.push_back(name);
  }
  manifest["files"] = listing;
  write_text((std::filesystem::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  written.push_back("manifest.json");

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  write_text((std::filesystem::path(dir) / "timestamp.txt").string(), std::string(stamp) + "\n");
  written.push_back("timestamp.txt");
  return written;
}

}  // namespace nlwmix
