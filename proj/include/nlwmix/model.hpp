#pragma once

// Equation data: nonlinearity f with primitive F, deterministic force h,
// noise coefficients b_j, damping gamma and the norm weight alpha.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlwmix/basis.hpp"
#include "nlwmix/errors.hpp"

namespace nlwmix {

enum class NonlinearityKind { Zero, SineGordon, KleinGordon };

inline std::string to_string(NonlinearityKind kind) {
  switch (kind) {
    case NonlinearityKind::Zero: return "zero";
    case NonlinearityKind::SineGordon: return "sine-gordon";
    case NonlinearityKind::KleinGordon: return "klein-gordon";
  }
  return "unknown";
}

/// f(u) = sin u, f(u) = |u|^rho u - lambda u, or f = 0.
class Nonlinearity {
 public:
  static Nonlinearity zero() { return Nonlinearity(NonlinearityKind::Zero, 1.0, 0.0); }
  /// Sine-Gordon obeys the growth bound for every rho > 0; rho = 1 is the
  /// convention used for Sobolev-index ranges.
  static Nonlinearity sine_gordon() { return Nonlinearity(NonlinearityKind::SineGordon, 1.0, 0.0); }
  static Nonlinearity klein_gordon(double rho, double lambda) {
    if (!(rho > 0.0 && rho < 2.0)) {
      throw ConfigError("klein-gordon exponent rho must lie in (0, 2), got " + std::to_string(rho));
    }
    if (!(lambda >= 0.0)) throw ConfigError("klein-gordon lambda must be >= 0");
    return Nonlinearity(NonlinearityKind::KleinGordon, rho, lambda);
  }

  [[nodiscard]] NonlinearityKind kind() const noexcept { return kind_; }
  [[nodiscard]] double rho() const noexcept { return rho_; }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }
  [[nodiscard]] bool is_zero() const noexcept { return kind_ == NonlinearityKind::Zero; }
  [[nodiscard]] bool is_bounded() const noexcept { return kind_ != NonlinearityKind::KleinGordon; }

  [[nodiscard]] double f(double u) const noexcept {
    switch (kind_) {
      case NonlinearityKind::Zero: return 0.0;
      case NonlinearityKind::SineGordon: return std::sin(u);
      case NonlinearityKind::KleinGordon: return std::pow(std::abs(u), rho_) * u - lambda_ * u;
    }
    return 0.0;
  }

  /// Primitive with F(0) = 0.
  [[nodiscard]] double F(double u) const noexcept {
    switch (kind_) {
      case NonlinearityKind::Zero: return 0.0;
      case NonlinearityKind::SineGordon: return 1.0 - std::cos(u);
      case NonlinearityKind::KleinGordon:
        return std::pow(std::abs(u), rho_ + 2.0) / (rho_ + 2.0) - 0.5 * lambda_ * u * u;
    }
    return 0.0;
  }

  [[nodiscard]] double df(double u) const noexcept {
    switch (kind_) {
      case NonlinearityKind::Zero: return 0.0;
      case NonlinearityKind::SineGordon: return std::cos(u);
      case NonlinearityKind::KleinGordon: return (rho_ + 1.0) * std::pow(std::abs(u), rho_) - lambda_;
    }
    return 0.0;
  }

  /// Singular at u = 0 for Klein-Gordon with rho < 1.
  [[nodiscard]] double d2f(double u) const noexcept {
    switch (kind_) {
      case NonlinearityKind::Zero: return 0.0;
      case NonlinearityKind::SineGordon: return -std::sin(u);
      case NonlinearityKind::KleinGordon: {
        const double sign = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
        return rho_ * (rho_ + 1.0) * std::pow(std::abs(u), rho_ - 1.0) * sign;
      }
    }
    return 0.0;
  }

 private:
  Nonlinearity(NonlinearityKind kind, double rho, double lambda)
      : kind_(kind), rho_(rho), lambda_(lambda) {}

  NonlinearityKind kind_;
  double rho_;
  double lambda_;
};

struct DissipativityReport {
  double c_lower = 0.0;     // F(u) >= -nu u^2 - C
  double c_virial = 0.0;    // f(u) u - F(u) >= -nu u^2 - C
  double c_growth = 0.0;    // |f''(u)| <= C (|u|^{rho-1} + 1)
  double constant = 0.0;    // max of the two dissipativity constants
  bool holds = false;
  std::string note;
};

namespace detail {
inline void scan_dissipativity(const Nonlinearity& nl, double nu, double range, std::size_t points,
                               DissipativityReport& rep) {
  rep.c_lower = rep.c_virial = rep.c_growth = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double u = -range + 2.0 * range * (static_cast<double>(i) + 0.5) / static_cast<double>(points);
    const double F = nl.F(u);
    const double f = nl.f(u);
    rep.c_lower = std::max(rep.c_lower, -F - nu * u * u);
    rep.c_virial = std::max(rep.c_virial, -(f * u - F) - nu * u * u);
    const double weight = std::pow(std::abs(u), nl.rho() - 1.0) + 1.0;
    rep.c_growth = std::max(rep.c_growth, std::abs(nl.d2f(u)) / weight);
  }
}
}  // namespace detail

/// Smallest constants for which the dissipativity and growth conditions hold
/// on a dense grid of [-range, range]. A constant that keeps growing when the
/// interval is doubled means no uniform constant exists; `holds` is then false.
inline DissipativityReport check_dissipativity(const Nonlinearity& nl, double nu, double range) {
  if (!(range > 0.0)) throw ConfigError("dissipativity scan range must be positive");
  constexpr std::size_t kPoints = 200000;  // even count, so u = 0 is never sampled
  DissipativityReport rep;
  detail::scan_dissipativity(nl, nu, range, kPoints, rep);
  DissipativityReport wide;
  detail::scan_dissipativity(nl, nu, 2.0 * range, 2 * kPoints, wide);
  rep.constant = std::max(rep.c_lower, rep.c_virial);
  const auto stable = [](double a, double b) {
    return std::isfinite(a) && std::isfinite(b) && b <= a * (1.0 + 1e-4) + 1e-9;
  };
  rep.holds = stable(rep.c_lower, wide.c_lower) && stable(rep.c_virial, wide.c_virial) &&
              stable(rep.c_growth, wide.c_growth) && nl.rho() < 2.0;
  if (!rep.holds) rep.note = "constant grows with the scan interval";
  return rep;
}

struct NoiseSpec {
  double b0 = 1.0;
  double decay_q = 1.0;                // b_j = b0 * lambda_j^{-q}
  std::optional<std::size_t> cutoff;   // b_j = 0 for j > cutoff (1-based)
  std::uint64_t seed = 0;
};

struct NoiseCoefficients {
  std::vector<double> b;
  double B = 0.0;   // sum b_j^2
  double B1 = 0.0;  // sum lambda_j b_j^2
};

inline NoiseCoefficients noise_coefficients(const NoiseSpec& spec, const Basis& basis) {
  if (!(spec.b0 >= 0.0)) throw ConfigError("noise amplitude b0 must be >= 0");
  if (!(spec.decay_q >= 0.0)) throw ConfigError("noise decay exponent q must be >= 0");
  NoiseCoefficients out;
  out.b.resize(basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const bool kept = !spec.cutoff || j < *spec.cutoff;
    const double lam = basis.eigenvalue(j);
    out.b[j] = kept ? spec.b0 * std::pow(lam, -spec.decay_q) : 0.0;
    out.B += out.b[j] * out.b[j];
    out.B1 += lam * out.b[j] * out.b[j];
  }
  return out;
}

/// Largest alpha for which the cross terms of the energy identity are
/// absorbed: alpha <= gamma/2 and alpha (gamma - alpha) <= 3 lambda_1 / 16.
inline double alpha_max(double gamma, double lambda1) {
  const double bound = 3.0 * lambda1 / 16.0;
  if (gamma * gamma / 4.0 <= bound) return gamma / 2.0;
  return 0.5 * (gamma - std::sqrt(gamma * gamma - 4.0 * bound));
}

inline double default_alpha(double gamma, double lambda1) {
  return std::min(gamma, lambda1 / gamma) / 10.0;
}

struct ModelOptions {
  double gamma = 1.0;
  std::optional<double> alpha;
  std::optional<double> nu;
  double h_amplitude = 0.0;  // h = h_amplitude * e_1
  Nonlinearity nonlinearity = Nonlinearity::sine_gordon();
  NoiseSpec noise;
  double dissipativity_range = 50.0;
};

/// Immutable parameter set shared by every simulation of one experiment.
class Model {
 public:
  Model(std::shared_ptr<const Basis> basis, const ModelOptions& opt)
      : basis_(std::move(basis)),
        gamma_(opt.gamma),
        nonlinearity_(opt.nonlinearity),
        noise_spec_(opt.noise) {
    if (!basis_) throw ConfigError("model needs a basis");
    if (!(gamma_ > 0.0)) throw ConfigError("damping gamma must be positive");
    const double lambda1 = basis_->eigenvalue(0);
    alpha_ = opt.alpha.value_or(default_alpha(gamma_, lambda1));
    if (!(alpha_ > 0.0) || alpha_ > alpha_max(gamma_, lambda1)) {
      throw ConfigError("alpha must lie in (0, " + std::to_string(alpha_max(gamma_, lambda1)) + "]");
    }
    nu_ = opt.nu.value_or(std::min(lambda1, gamma_) / 16.0);
    if (!(nu_ > 0.0) || nu_ > std::min(lambda1, gamma_) / 8.0) {
      throw ConfigError("nu must lie in (0, min(lambda_1, gamma)/8]");
    }
    // Bounded nonlinearities reach their worst constant near |u| ~ 1/nu.
    dissipativity_ = check_dissipativity(nonlinearity_, nu_, std::max(opt.dissipativity_range, 4.0 / nu_));
    if (!dissipativity_.holds) throw ConfigError("nonlinearity is not dissipative: " + dissipativity_.note);
    noise_ = noise_coefficients(noise_spec_, *basis_);
    h_.assign(basis_->size(), 0.0);
    h_[0] = opt.h_amplitude;
  }

  [[nodiscard]] const Basis& basis() const noexcept { return *basis_; }
  [[nodiscard]] const std::shared_ptr<const Basis>& basis_ptr() const noexcept { return basis_; }
  [[nodiscard]] std::size_t size() const noexcept { return basis_->size(); }
  [[nodiscard]] double gamma() const noexcept { return gamma_; }
  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  [[nodiscard]] double nu() const noexcept { return nu_; }
  [[nodiscard]] double c_diss() const noexcept { return dissipativity_.constant; }
  [[nodiscard]] const DissipativityReport& dissipativity() const noexcept { return dissipativity_; }
  [[nodiscard]] const Nonlinearity& nonlinearity() const noexcept { return nonlinearity_; }
  [[nodiscard]] const NoiseSpec& noise_spec() const noexcept { return noise_spec_; }
  [[nodiscard]] std::span<const double> noise_b() const noexcept { return noise_.b; }
  [[nodiscard]] double noise_B() const noexcept { return noise_.B; }
  [[nodiscard]] double noise_B1() const noexcept { return noise_.B1; }
  [[nodiscard]] double noise_sup_b2() const noexcept {
    double m = 0.0;
    for (double b : noise_.b) m = std::max(m, b * b);
    return m;
  }
  [[nodiscard]] std::span<const double> h() const noexcept { return h_; }
  [[nodiscard]] bool has_noise() const noexcept { return noise_.B > 0.0; }

  /// Copy with the noise switched off or otherwise modified.
  [[nodiscard]] Model with_noise(const NoiseSpec& spec) const {
    Model copy = *this;
    copy.noise_spec_ = spec;
    copy.noise_ = noise_coefficients(spec, *basis_);
    return copy;
  }
  [[nodiscard]] Model without_noise() const {
    Model copy = *this;
    std::fill(copy.noise_.b.begin(), copy.noise_.b.end(), 0.0);
    copy.noise_.B = copy.noise_.B1 = 0.0;
    return copy;
  }

 private:
  std::shared_ptr<const Basis> basis_;
  double gamma_;
  double alpha_ = 0.0;
  double nu_ = 0.0;
  Nonlinearity nonlinearity_;
  NoiseSpec noise_spec_;
  NoiseCoefficients noise_;
  DissipativityReport dissipativity_;
  std::vector<double> h_;
};

/// Phase-space point y = [u, u_t] in modal coordinates.
struct State {
  double t = 0.0;
  ModalCoeffs u;
  ModalCoeffs v;

  static State zero(std::size_t modes) { return State{0.0, ModalCoeffs(modes, 0.0), ModalCoeffs(modes, 0.0)}; }
};

struct StateDerivative {
  ModalCoeffs du;
  ModalCoeffs dv;
};

struct NonlinearTerm {
  ModalCoeffs f_modal;
  double F_integral = 0.0;
};

/// Pseudospectral evaluation of P_M f(u) and of the integral of F(u). Owns
/// its nodal scratch buffers, so use one evaluator per thread.
class NonlinearEvaluator {
 public:
  NonlinearEvaluator(const Basis& basis, Nonlinearity nl)
      : basis_(&basis), nl_(nl), nodal_(basis.node_count()), work_(basis.node_count()) {}

  /// Writes P_M f(u) into `f_modal` and returns the integral of F(u). The
  /// two loops stay separate: a fused sin/cos pass rounds differently from
  /// sin alone, and the force must not depend on whether F was requested.
  double evaluate(std::span<const double> u, std::span<double> f_modal) {
    evaluate_force(u, f_modal);
    return cached_primitive();
  }

  /// P_M f(u) only; the nodal values stay cached for cached_primitive().
  void evaluate_force(std::span<const double> u, std::span<double> f_modal) {
    if (nl_.is_zero()) {
      std::fill(f_modal.begin(), f_modal.end(), 0.0);
      return;
    }
    basis_->to_nodal(u, nodal_);
    bool finite = true;
    for (std::size_t i = 0; i < nodal_.size(); ++i) {
      finite = finite && std::isfinite(nodal_[i]);
      work_[i] = nl_.f(nodal_[i]);
    }
    if (!finite) throw DivergenceError("non-finite nodal values", 0.0, 0);
    basis_->to_modal(work_, f_modal);
  }

  /// Integral of F over the field last passed to evaluate_force().
  [[nodiscard]] double cached_primitive() const {
    if (nl_.is_zero()) return 0.0;
    double integral = 0.0;
    for (double x : nodal_) integral += nl_.F(x);
    if (!std::isfinite(integral)) throw DivergenceError("non-finite nodal values", 0.0, 0);
    return integral * basis_->node_weight();
  }

  /// Integral of F(u) only.
  double primitive_integral(std::span<const double> u) {
    if (nl_.is_zero()) return 0.0;
    basis_->to_nodal(u, nodal_);
    double integral = 0.0;
    for (double x : nodal_) integral += nl_.F(x);
    if (!std::isfinite(integral)) throw DivergenceError("non-finite nodal values", 0.0, 0);
    return integral * basis_->node_weight();
  }

  [[nodiscard]] const Basis& basis() const noexcept { return *basis_; }
  [[nodiscard]] const Nonlinearity& nonlinearity() const noexcept { return nl_; }

 private:
  const Basis* basis_;
  Nonlinearity nl_;
  NodalField nodal_;
  NodalField work_;
};

inline NonlinearTerm eval_nonlinearity(const Nonlinearity& nl, std::span<const double> u,
                                       const Basis& basis) {
  if (u.size() != basis.size()) throw ShapeError("eval_nonlinearity: coefficient length mismatch");
  NonlinearEvaluator eval(basis, nl);
  NonlinearTerm out{ModalCoeffs(basis.size()), 0.0};
  out.F_integral = eval.evaluate(u, out.f_modal);
  return out;
}

/// [v, -gamma v - lambda u - P_M f(u) + h].
inline StateDerivative drift(const State& s, const Model& m) {
  const auto& basis = m.basis();
  if (s.u.size() != basis.size() || s.v.size() != basis.size()) {
    throw ShapeError("drift: state does not match the model basis");
  }
  NonlinearTerm nl;
  try {
    nl = eval_nonlinearity(m.nonlinearity(), s.u, basis);
  } catch (const DivergenceError& e) {
    throw DivergenceError("drift: non-finite nodal values", s.t, 0);
  }
  StateDerivative d{s.v, ModalCoeffs(basis.size())};
  const auto lam = basis.eigenvalues();
  const auto h = m.h();
  for (std::size_t j = 0; j < basis.size(); ++j) {
    d.dv[j] = -m.gamma() * s.v[j] - lam[j] * s.u[j] - nl.f_modal[j] + h[j];
  }
  return d;
}

}  // namespace nlwmix
