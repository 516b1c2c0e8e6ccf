#pragma once

// Phase-space norms and the energy functional.

#include <cmath>
#include <span>

#include "nlwmix/basis.hpp"
#include "nlwmix/model.hpp"

namespace nlwmix {

/// |y|_H^2 = |grad u|^2 + |v + alpha u|^2 = sum lambda_j u_j^2 + sum (v_j + alpha u_j)^2.
inline double phase_norm_sq(const State& s, const Basis& basis, double alpha) {
  const auto lam = basis.eigenvalues();
  double acc = 0.0;
  for (std::size_t j = 0; j < lam.size(); ++j) {
    const double w = s.v[j] + alpha * s.u[j];
    acc += lam[j] * s.u[j] * s.u[j] + w * w;
  }
  return acc;
}

/// |y - y'|_H^2 without forming the difference state.
inline double phase_distance_sq(const State& a, const State& b, const Basis& basis, double alpha) {
  const auto lam = basis.eigenvalues();
  double acc = 0.0;
  for (std::size_t j = 0; j < lam.size(); ++j) {
    const double du = a.u[j] - b.u[j];
    const double w = (a.v[j] - b.v[j]) + alpha * du;
    acc += lam[j] * du * du + w * w;
  }
  return acc;
}

/// E(y) = |y|_H^2 + 2 int F(u), given the integral of F.
inline double energy_from_primitive(const State& s, const Basis& basis, double alpha, double F_integral) {
  return phase_norm_sq(s, basis, alpha) + 2.0 * F_integral;
}

/// Sobolev norm |u|_{H^sigma}^2 = sum lambda_j^sigma u_j^2.
inline double sobolev_norm_sq(std::span<const double> u, const Basis& basis, double sigma) {
  const auto lam = basis.eigenvalues();
  double acc = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) acc += std::pow(lam[j], sigma) * u[j] * u[j];
  return acc;
}

/// |[z, z_t]|_{H^s}^2 = sum lambda_j^s (lambda_j z_j^2 + zt_j^2).
inline double phase_sobolev_norm_sq(std::span<const double> z, std::span<const double> zt, const Basis& basis,
                                    double s) {
  const auto lam = basis.eigenvalues();
  double acc = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) acc += std::pow(lam[j], s) * (lam[j] * z[j] * z[j] + zt[j] * zt[j]);
  return acc;
}

/// State with H-orthonormal coordinates p_j = sqrt(lambda_j) u_j and
/// q_j = v_j + alpha u_j.
inline State from_h_coordinates(std::span<const double> p, std::span<const double> q, const Basis& basis,
                                double alpha) {
  State s = State::zero(basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) {
    s.u[j] = p[j] / std::sqrt(basis.eigenvalue(j));
    s.v[j] = q[j] - alpha * s.u[j];
  }
  return s;
}

/// a + c b, componentwise.
inline State axpy(const State& a, double c, const State& b) {
  State out = a;
  for (std::size_t j = 0; j < out.u.size(); ++j) {
    out.u[j] += c * b.u[j];
    out.v[j] += c * b.v[j];
  }
  return out;
}

}  // namespace nlwmix
