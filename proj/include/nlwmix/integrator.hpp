#pragma once

// Strang splitting for the modal system
//   du = v dt,   dv = (-gamma v - lambda u - f(u) + h) dt + b dW.
// The affine part (damped oscillator plus constant force h plus additive
// noise) is propagated exactly mode by mode: y <- y* + Phi (y - y*) + xi with
// y* = [h/lambda, 0] and xi ~ N(0, Sigma(dt)). The nonlinearity enters as
// two half kicks on the velocity. f(u) at the end of a step is reused as
// the first kick of the next one.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nlwmix/errors.hpp"
#include "nlwmix/model.hpp"
#include "nlwmix/rng.hpp"

namespace nlwmix {

/// Row-major 2x2 matrix.
using Mat2 = std::array<double, 4>;

/// exp(A t) with A = [[0, 1], [-lambda, -gamma]], in closed form for every
/// damping regime.
inline Mat2 oscillator_flow(double lambda, double gamma, double t) {
  const double delta = 0.25 * gamma * gamma - lambda;  // (A + gamma/2)^2 = delta I
  double c = 0.0;  // e^{-gamma t/2} C(t)
  double s = 0.0;  // e^{-gamma t/2} S(t)
  const double x = delta * t * t;
  if (std::abs(x) < 1e-6) {
    const double damp = std::exp(-0.5 * gamma * t);
    c = damp * (1.0 + x / 2.0 + x * x / 24.0);
    s = damp * t * (1.0 + x / 6.0 + x * x / 120.0);
  } else if (delta < 0.0) {
    const double omega = std::sqrt(-delta);
    const double damp = std::exp(-0.5 * gamma * t);
    c = damp * std::cos(omega * t);
    s = damp * std::sin(omega * t) / omega;
  } else {
    const double mu = std::sqrt(delta);
    const double slow = std::exp((mu - 0.5 * gamma) * t);
    const double fast = std::exp(-(mu + 0.5 * gamma) * t);
    c = 0.5 * (slow + fast);
    s = 0.5 * (slow - fast) / mu;
  }
  return {c + 0.5 * gamma * s, s, -lambda * s, c - 0.5 * gamma * s};
}

/// Covariance [Suu, Suv, Svv] of int_0^dt e^{A r} [0, b] dW(r).
inline std::array<double, 3> oscillator_noise_covariance(double lambda, double gamma, double b,
                                                         double dt) {
  if (b == 0.0) return {0.0, 0.0, 0.0};
  const double b2 = b * b;
  if (gamma * dt >= 0.05 && lambda > 0.0) {
    // Sigma = Sigma_inf - Phi Sigma_inf Phi^T, stable once e^{-gamma dt} is
    // well separated from 1.
    const double pu = b2 / (2.0 * gamma * lambda);
    const double pv = b2 / (2.0 * gamma);
    const Mat2 p = oscillator_flow(lambda, gamma, dt);
    return {pu - (p[0] * p[0] * pu + p[1] * p[1] * pv), -(p[0] * p[2] * pu + p[1] * p[3] * pv),
            pv - (p[2] * p[2] * pu + p[3] * p[3] * pv)};
  }
  // Composite 8-point Gauss-Legendre on panels short against the oscillation period.
  static constexpr std::array<double, 8> kNodes{-0.9602898564975363, -0.7966664774136267,
                                                -0.5255324099163290, -0.1834346424956498,
                                                0.1834346424956498,  0.5255324099163290,
                                                0.7966664774136267,  0.9602898564975363};
  static constexpr std::array<double, 8> kWeights{0.1012285362903763, 0.2223810344533745,
                                                  0.3137066458778873, 0.3626837833783620,
                                                  0.3626837833783620, 0.3137066458778873,
                                                  0.2223810344533745, 0.1012285362903763};
  const double rate = std::sqrt(std::abs(lambda)) + gamma + std::sqrt(std::abs(0.25 * gamma * gamma - lambda));
  const int panels = std::max(1, static_cast<int>(std::ceil(dt * rate / 0.25)));
  const double width = dt / panels;
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * width;
    for (std::size_t q = 0; q < kNodes.size(); ++q) {
      const double r = mid + 0.5 * width * kNodes[q];
      const Mat2 phi = oscillator_flow(lambda, gamma, r);
      const double w = 0.5 * width * kWeights[q];
      acc[0] += w * phi[1] * phi[1];
      acc[1] += w * phi[1] * phi[3];
      acc[2] += w * phi[3] * phi[3];
    }
  }
  return {b2 * acc[0], b2 * acc[1], b2 * acc[2]};
}

/// Per-mode data of the exact affine step.
struct ModePropagator {
  Mat2 phi{};
  std::array<double, 3> cov{};   // Suu, Suv, Svv
  std::array<double, 3> chol{};  // lower factor l00, l10, l11 (or pivoted, see below)
  bool pivoted = false;          // factor taken with the velocity first
  double u_star = 0.0;           // h_j / lambda_j
};

class LinearPropagator {
 public:
  LinearPropagator(const Model& m, double dt) : dt_(dt), gamma_(m.gamma()) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    const auto& basis = m.basis();
    modes_.resize(basis.size());
    for (std::size_t j = 0; j < basis.size(); ++j) {
      auto& mp = modes_[j];
      const double lam = basis.eigenvalue(j);
      mp.phi = oscillator_flow(lam, gamma_, dt);
      mp.cov = oscillator_noise_covariance(lam, gamma_, m.noise_b()[j], dt);
      factor(mp);
      mp.u_star = m.h()[j] / lam;
    }
  }

  [[nodiscard]] double dt() const noexcept { return dt_; }
  [[nodiscard]] double gamma() const noexcept { return gamma_; }
  [[nodiscard]] std::size_t size() const noexcept { return modes_.size(); }
  [[nodiscard]] const ModePropagator& mode(std::size_t j) const { return modes_.at(j); }
  [[nodiscard]] std::span<const ModePropagator> modes() const noexcept { return modes_; }

  /// y <- y* + Phi (y - y*) + [du, dv], in place.
  void apply(std::span<double> u, std::span<double> v, std::span<const double> du,
             std::span<const double> dv) const noexcept {
    for (std::size_t j = 0; j < modes_.size(); ++j) {
      const auto& mp = modes_[j];
      const double x = u[j] - mp.u_star;
      const double y = v[j];
      u[j] = mp.u_star + mp.phi[0] * x + mp.phi[1] * y + du[j];
      v[j] = mp.phi[2] * x + mp.phi[3] * y + dv[j];
    }
  }

 private:
  // 2x2 Cholesky, pivoting to the larger diagonal entry; semidefinite
  // remainders are clamped to zero.
  static void factor(ModePropagator& mp) {
    const double a = mp.cov[0];
    const double c = mp.cov[1];
    const double d = mp.cov[2];
    mp.chol = {0.0, 0.0, 0.0};
    mp.pivoted = false;
    if (a <= 0.0 && d <= 0.0) return;
    if (a >= d) {
      const double l00 = std::sqrt(a);
      const double l10 = c / l00;
      mp.chol = {l00, l10, std::sqrt(std::max(d - l10 * l10, 0.0))};
    } else {
      mp.pivoted = true;
      const double l00 = std::sqrt(d);
      const double l10 = c / l00;
      mp.chol = {l00, l10, std::sqrt(std::max(a - l10 * l10, 0.0))};
    }
  }

  double dt_;
  double gamma_;
  std::vector<ModePropagator> modes_;
};

/// Per-mode stochastic convolution increments of one step.
struct NoiseIncrement {
  std::vector<double> du;
  std::vector<double> dv;

  explicit NoiseIncrement(std::size_t modes = 0) : du(modes, 0.0), dv(modes, 0.0) {}
};

/// Identifies the noise that drove a trajectory; the increments themselves
/// are regenerated from the counter-based stream.
struct NoiseRecord {
  std::uint64_t seed = 0;
  std::uint32_t stream = 0;
  double dt = 0.0;
  std::uint64_t steps = 0;
};

class NoiseSource {
 public:
  NoiseSource(std::uint64_t seed, std::uint32_t stream) : gauss_(seed, stream) {}

  /// Increment for step `step` (0-based), drawn from N(0, Sigma_j) per mode.
  void draw(std::uint64_t step, const LinearPropagator& prop, NoiseIncrement& out) const {
    const auto modes = prop.modes();
    for (std::size_t j = 0; j < modes.size(); ++j) {
      const auto& mp = modes[j];
      if (mp.chol[0] == 0.0) {
        out.du[j] = out.dv[j] = 0.0;
        continue;
      }
      const auto [z1, z2] = gauss_.normal_pair(step, static_cast<std::uint32_t>(j));
      const double first = mp.chol[0] * z1;
      const double second = mp.chol[1] * z1 + mp.chol[2] * z2;
      if (mp.pivoted) {
        out.dv[j] = first;
        out.du[j] = second;
      } else {
        out.du[j] = first;
        out.dv[j] = second;
      }
    }
  }

  [[nodiscard]] std::uint64_t seed() const noexcept { return gauss_.seed(); }
  [[nodiscard]] std::uint32_t stream() const noexcept { return gauss_.stream(); }

 private:
  GaussianStream gauss_;
};

/// Advances a single state. Caches P_M f(u) of the current state; the
/// integral of F(u) is computed on request.
class Stepper {
 public:
  Stepper(const Model& m, const LinearPropagator& prop)
      : prop_(&prop), eval_(m.basis(), m.nonlinearity()), f_(m.size(), 0.0) {
    if (prop.size() != m.size()) throw ShapeError("propagator does not match the model basis");
  }

  void reset(const State& s) { evaluate(s.u, s.t, 0); }

  void step(State& s, const NoiseIncrement& noise, std::size_t step_index) {
    const double half = 0.5 * prop_->dt();
    for (std::size_t j = 0; j < f_.size(); ++j) s.v[j] -= half * f_[j];
    prop_->apply(s.u, s.v, noise.du, noise.dv);
    s.t += prop_->dt();
    evaluate(s.u, s.t, step_index);
    for (std::size_t j = 0; j < f_.size(); ++j) s.v[j] -= half * f_[j];
  }

  /// Integral of F over the current position.
  [[nodiscard]] double F_integral() const {
    if (!F_) F_ = eval_.cached_primitive();
    return *F_;
  }
  [[nodiscard]] std::span<const double> f_modal() const noexcept { return f_; }
  [[nodiscard]] const LinearPropagator& propagator() const noexcept { return *prop_; }

 private:
  void evaluate(std::span<const double> u, double t, std::size_t step) {
    F_.reset();
    try {
      eval_.evaluate_force(u, f_);
    } catch (const DivergenceError&) {
      throw DivergenceError("integration diverged", t, step);
    }
  }

  const LinearPropagator* prop_;
  NonlinearEvaluator eval_;
  std::vector<double> f_;
  mutable std::optional<double> F_;
};

inline std::uint64_t step_count(double T, double dt) {
  if (!(T > 0.0)) throw ConfigError("horizon T must be positive");
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  return static_cast<std::uint64_t>(std::ceil(T / dt - 1e-9));
}

/// Advances `s` by `steps` steps of noise stream `noise`, calling
/// obs(step, state, F) on the initial state and after every step, where
/// F() returns the integral of F(u) (evaluated only when called).
template <class Observer>
void run_path(State& s, const Model& m, const LinearPropagator& prop, std::uint64_t steps,
              const NoiseSource& noise, Observer&& obs, std::uint64_t first_step = 0) {
  Stepper stepper(m, prop);
  stepper.reset(s);
  NoiseIncrement inc(m.size());
  const double t0 = s.t;
  const auto F = [&stepper] { return stepper.F_integral(); };
  obs(first_step, static_cast<const State&>(s), F);
  for (std::uint64_t k = 0; k < steps; ++k) {
    const std::uint64_t index = first_step + k;
    noise.draw(index, prop, inc);
    stepper.step(s, inc, index + 1);
    s.t = t0 + static_cast<double>(k + 1) * prop.dt();
    obs(index + 1, static_cast<const State&>(s), F);
  }
}

struct PathOptions {
  std::uint32_t stream = 0;
  std::uint64_t record_every = 1;
};

struct Trajectory {
  std::vector<State> states;
  NoiseRecord noise;
  std::uint64_t record_every = 1;
  bool failed = false;
  std::string failure;

  [[nodiscard]] std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(states.size());
    for (const auto& s : states) t.push_back(s.t);
    return t;
  }
};

/// Solution path on [0, ceil(T/dt) dt]. Deterministic in all arguments; a
/// blow-up leaves the states computed so far and sets `failed`.
inline Trajectory simulate_path(const State& y0, const Model& m, double T, double dt,
                                std::uint64_t seed, const PathOptions& opt = {}) {
  if (y0.u.size() != m.size() || y0.v.size() != m.size()) throw ShapeError("initial state does not match the basis");
  if (opt.record_every == 0) throw ConfigError("record_every must be >= 1");
  const std::uint64_t steps = step_count(T, dt);
  const LinearPropagator prop(m, dt);
  Trajectory traj;
  traj.noise = NoiseRecord{seed, opt.stream, dt, steps};
  traj.record_every = opt.record_every;
  traj.states.reserve(static_cast<std::size_t>(steps / opt.record_every + 2));
  State s = y0;
  try {
    run_path(s, m, prop, steps, NoiseSource(seed, opt.stream),
             [&](std::uint64_t k, const State& st, const auto&) {
               if (k % opt.record_every == 0 || k == steps) traj.states.push_back(st);
             });
  } catch (const DivergenceError& e) {
    traj.failed = true;
    traj.failure = e.what();
  }
  return traj;
}

/// The state [c e_1, 0] whose H-norm equals `norm`.
inline State mode_one_state(const Model& m, double norm) {
  State s = State::zero(m.size());
  const double lam = m.basis().eigenvalue(0);
  s.u[0] = norm / std::sqrt(lam + m.alpha() * m.alpha());
  return s;
}

}  // namespace nlwmix
