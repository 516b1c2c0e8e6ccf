#pragma once

// Monte Carlo ensembles of independent solutions. Trajectory i uses noise
// stream i of the base seed, so results do not depend on the thread count
// or on scheduling order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "nlwmix/errors.hpp"
#include "nlwmix/integrator.hpp"
#include "nlwmix/model.hpp"
#include "nlwmix/norms.hpp"

namespace nlwmix {

/// Worker count: explicit value if positive, else NLWMIX_THREADS, else the
/// hardware concurrency.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("NLWMIX_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on `threads` workers; the first exception is
/// rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Streaming functional of one path; sees every step.
class PathMonitor {
 public:
  virtual ~PathMonitor() = default;
  virtual void observe(std::uint64_t step, const State& s, double energy) = 0;
  [[nodiscard]] virtual std::vector<double> result() const = 0;
};

using MonitorFactory = std::function<std::unique_ptr<PathMonitor>()>;
using StateFunctional = std::function<double(const State&)>;

struct EnsembleOptions {
  unsigned threads = 0;
  std::uint32_t first_stream = 0;
  bool keep_states = true;
  /// Running time integrals int_0^t psi(y(s)) ds (trapezoid on the step grid).
  std::vector<StateFunctional> integrands;
  MonitorFactory monitor;
  /// Fraction of diverged paths above which the ensemble is an error.
  double max_failure_fraction = 0.01;
};

struct Ensemble {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::uint32_t first_stream = 0;
  double dt = 0.0;
  double horizon = 0.0;
  std::vector<double> checkpoints;                      // snapped to the step grid
  std::vector<std::uint64_t> checkpoint_steps;
  std::vector<std::vector<State>> states;               // [path][checkpoint]
  std::vector<std::vector<double>> energies;            // [path][checkpoint]
  std::vector<std::vector<std::vector<double>>> integrals;  // [integrand][path][checkpoint]
  std::vector<std::vector<double>> monitor_values;      // [path]
  std::vector<char> failed;
  std::size_t failures = 0;

  /// Values of `psi` at checkpoint c across the non-failed paths.
  [[nodiscard]] std::vector<double> marginal(std::size_t c, const StateFunctional& psi) const {
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!failed[i]) out.push_back(psi(states[i][c]));
    }
    return out;
  }

  /// Paths [first, first + count) as an ensemble of their own.
  [[nodiscard]] Ensemble slice(std::size_t first, std::size_t count) const {
    if (first + count > n) throw ShapeError("ensemble has only " + std::to_string(n) + " paths");
    Ensemble out = *this;
    out.n = count;
    out.first_stream = first_stream + static_cast<std::uint32_t>(first);
    auto cut = [first, count](auto& v) {
      if (v.size() >= first + count) v = std::decay_t<decltype(v)>(v.begin() + first, v.begin() + first + count);
    };
    cut(out.states);
    cut(out.energies);
    for (auto& q : out.integrals) cut(q);
    cut(out.monitor_values);
    cut(out.failed);
    out.failures = static_cast<std::size_t>(std::count(out.failed.begin(), out.failed.end(), 1));
    return out;
  }

  /// The first k paths.
  [[nodiscard]] Ensemble head(std::size_t k) const { return slice(0, k); }

  /// Only the checkpoints at times <= t. Monitor values keep the full horizon.
  [[nodiscard]] Ensemble until(double t) const {
    std::size_t keep = 0;
    while (keep < checkpoints.size() && checkpoints[keep] <= t + 0.5 * dt) ++keep;
    Ensemble out = *this;
    out.checkpoints.resize(keep);
    out.checkpoint_steps.resize(keep);
    for (auto& row : out.states) row.resize(std::min(row.size(), keep));
    for (auto& row : out.energies) row.resize(keep);
    for (auto& q : out.integrals) {
      for (auto& row : q) row.resize(keep);
    }
    return out;
  }

  [[nodiscard]] std::vector<double> energy_marginal(std::size_t c) const {
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
      if (!failed[i]) out.push_back(energies[i][c]);
    }
    return out;
  }
};

inline Ensemble simulate_ensemble(const State& y0, const Model& m, std::size_t n, double T, double dt,
                                  std::uint64_t seed, const std::vector<double>& checkpoints,
                                  const EnsembleOptions& opt = {}) {
  if (n < 1) throw ConfigError("ensemble needs at least one path");
  const std::uint64_t steps = step_count(T, dt);
  Ensemble ens;
  ens.n = n;
  ens.seed = seed;
  ens.first_stream = opt.first_stream;
  ens.dt = dt;
  ens.horizon = static_cast<double>(steps) * dt;
  for (double c : checkpoints) {
    if (c < 0.0 || c > T + 1e-12) throw ConfigError("checkpoint outside [0, T]");
    const auto k = static_cast<std::uint64_t>(std::llround(c / dt));
    ens.checkpoint_steps.push_back(std::min(k, steps));
  }
  std::sort(ens.checkpoint_steps.begin(), ens.checkpoint_steps.end());
  ens.checkpoint_steps.erase(std::unique(ens.checkpoint_steps.begin(), ens.checkpoint_steps.end()),
                             ens.checkpoint_steps.end());
  for (auto k : ens.checkpoint_steps) ens.checkpoints.push_back(y0.t + static_cast<double>(k) * dt);
  const std::size_t nc = ens.checkpoint_steps.size();

  ens.states.assign(n, {});
  ens.energies.assign(n, std::vector<double>(nc, 0.0));
  ens.integrals.assign(opt.integrands.size(), std::vector<std::vector<double>>(n, std::vector<double>(nc, 0.0)));
  ens.monitor_values.assign(n, {});
  ens.failed.assign(n, 0);

  const LinearPropagator prop(m, dt);
  const double alpha = m.alpha();
  const auto& basis = m.basis();
  parallel_for(n, resolve_threads(opt.threads), [&](std::size_t i) {
    State s = y0;
    if (opt.keep_states) ens.states[i].reserve(nc);
    std::unique_ptr<PathMonitor> monitor = opt.monitor ? opt.monitor() : nullptr;
    std::vector<double> running(opt.integrands.size(), 0.0);
    std::vector<double> previous(opt.integrands.size(), 0.0);
    std::size_t next = 0;
    try {
      run_path(s, m, prop, steps, NoiseSource(seed, opt.first_stream + static_cast<std::uint32_t>(i)),
               [&](std::uint64_t k, const State& st, const auto& F) {
                 for (std::size_t q = 0; q < opt.integrands.size(); ++q) {
                   const double value = opt.integrands[q](st);
                   if (k > 0) running[q] += 0.5 * dt * (value + previous[q]);
                   previous[q] = value;
                 }
                 double energy = 0.0;
                 const bool at_checkpoint = next < nc && ens.checkpoint_steps[next] == k;
                 if (monitor || at_checkpoint) energy = energy_from_primitive(st, basis, alpha, F());
                 if (monitor) monitor->observe(k, st, energy);
                 while (next < nc && ens.checkpoint_steps[next] == k) {
                   if (opt.keep_states) ens.states[i].push_back(st);
                   ens.energies[i][next] = energy;
                   for (std::size_t q = 0; q < opt.integrands.size(); ++q) ens.integrals[q][i][next] = running[q];
                   ++next;
                 }
               });
    } catch (const DivergenceError&) {
      ens.failed[i] = 1;
    }
    if (monitor) ens.monitor_values[i] = monitor->result();
  });
  ens.failures = static_cast<std::size_t>(std::count(ens.failed.begin(), ens.failed.end(), 1));
  if (static_cast<double>(ens.failures) > opt.max_failure_fraction * static_cast<double>(n)) {
    throw DivergenceError(std::to_string(ens.failures) + " of " + std::to_string(n) + " paths diverged",
                          ens.horizon, steps);
  }
  return ens;
}

/// Evenly spaced checkpoints 0, step, 2 step, ..., up to T.
inline std::vector<double> uniform_checkpoints(double T, double step) {
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor(T / step + 1e-9));
  for (std::size_t k = 0; k <= count; ++k) out.push_back(static_cast<double>(k) * step);
  return out;
}

}  // namespace nlwmix
