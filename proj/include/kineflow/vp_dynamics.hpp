#pragma once

// Agents moving around signed massive vanishing-point charges.
// Displacements are taken from the agent to the centre, q_j = V_j - q, so an
// attractive charge (sign +1) pulls toward V_j.

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "kineflow/error.hpp"
#include "kineflow/numerics.hpp"
#include "kineflow/phase_space.hpp"

namespace kineflow::vp {

struct ChargeCenter {
  Vec2 position = Vec2::Zero();  ///< px
  double mass = 1.0;
  int sign = +1;  ///< +1 attractive, -1 repulsive
};

struct ChargeSystem {
  std::vector<ChargeCenter> centers;
  double epsilon = 0.0;  ///< Plummer softening (px)

  void validate() const {
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw Error(ErrorCode::invalid_input, "softening must be finite and >= 0");
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const auto& c = centers[j];
      if (!c.position.allFinite()) throw Error(ErrorCode::invalid_input, "charge position is not finite", static_cast<long>(j));
      if (!(c.mass > 0) || !std::isfinite(c.mass)) throw Error(ErrorCode::invalid_input, "charge mass must be > 0", static_cast<long>(j));
      if (c.sign != 1 && c.sign != -1) throw Error(ErrorCode::invalid_input, "charge sign must be +1 or -1", static_cast<long>(j));
    }
  }
};

struct Orthocenter {
  Vec2 point = Vec2::Zero();
  std::array<double, 3> masses{};
};

/// Altitude intersection and inverse-distance masses. The index carried by an
/// infinite-mass error is the vertex number 1..3.
inline Orthocenter orthocenter_masses(const Vec2& v1, const Vec2& v2, const Vec2& v3) {
  if (!v1.allFinite() || !v2.allFinite() || !v3.allFinite()) throw Error(ErrorCode::invalid_input, "non-finite vertex");
  if (!(0.5 * std::abs(wedge2(v2 - v1, v3 - v1)) > 1e-9)) throw Error(ErrorCode::collinear, "vanishing points are collinear");
  // (x - v1).(v2 - v3) = 0 and (x - v2).(v1 - v3) = 0
  Mat2 a;
  a.row(0) = (v2 - v3).transpose();
  a.row(1) = (v1 - v3).transpose();
  const Vec2 rhs(v1.dot(v2 - v3), v2.dot(v1 - v3));
  Orthocenter out;
  out.point = a.partialPivLu().solve(rhs);
  const std::array<Vec2, 3> v{v1, v2, v3};
  const double scale = std::max({(v1 - v2).norm(), (v2 - v3).norm(), (v3 - v1).norm()});
  for (int j = 0; j < 3; ++j) {
    const double d = (v[static_cast<std::size_t>(j)] - out.point).norm();
    if (d <= 1e-12 * scale)
      throw Error(ErrorCode::infinite_mass, "vertex " + std::to_string(j + 1) + " coincides with the orthocenter", j + 1);
    out.masses[static_cast<std::size_t>(j)] = 1.0 / d;
  }
  return out;
}

inline ChargeSystem triangle_system(const Vec2& v1, const Vec2& v2, const Vec2& v3, std::array<int, 3> signs = {1, 1, 1},
                                    double epsilon = 0.0) {
  const Orthocenter o = orthocenter_masses(v1, v2, v3);
  ChargeSystem s;
  s.epsilon = epsilon;
  const std::array<Vec2, 3> v{v1, v2, v3};
  for (std::size_t j = 0; j < 3; ++j) s.centers.push_back({v[j], o.masses[j], signs[j]});
  s.validate();
  return s;
}

namespace detail {

/// |V - q|^2 + eps^2, refusing the unsoftened singularity.
inline double softened_r2(const ChargeSystem& s, const Vec2& d) {
  const double r2 = d.squaredNorm() + s.epsilon * s.epsilon;
  if (!(r2 > 0)) throw Error(ErrorCode::singularity, "agent sits on a charge centre with zero softening");
  return r2;
}

inline Vec2 as_vec2(const Vec& q) {
  if (q.size() != 2) throw Error(ErrorCode::invalid_dimension, "agents live in the image plane (m = 2)");
  return Vec2(q[0], q[1]);
}

}  // namespace detail

inline Vec2 acceleration(const Vec2& q, const ChargeSystem& s) {
  Vec2 a = Vec2::Zero();
  for (const auto& c : s.centers) {
    const Vec2 d = c.position - q;
    const double r2 = detail::softened_r2(s, d);
    a += (c.sign * c.mass / (r2 * std::sqrt(r2))) * d;
  }
  return a;
}

inline double potential(const Vec2& q, const ChargeSystem& s) {
  double v = 0.0;
  for (const auto& c : s.centers) v -= c.sign * c.mass / std::sqrt(detail::softened_r2(s, c.position - q));
  return v;
}

/// H = |p|^2 / 2 - sum_j s_j m_j / sqrt(|V_j - q|^2 + eps^2), separable.
inline phase::Hamiltonian signed_hamiltonian(const ChargeSystem& s) {
  s.validate();
  phase::Hamiltonian h = phase::builtin::separable(
      2, [](const Vec& p) { return 0.5 * p.squaredNorm(); }, [](const Vec& p) { return p; },
      [s](const Vec& q) { return potential(detail::as_vec2(q), s); },
      [s](const Vec& q) -> Vec { return -acceleration(detail::as_vec2(q), s); });
  return h;
}

inline double signed_hamiltonian(const phase::PhasePoint& z, const ChargeSystem& s) {
  return signed_hamiltonian(s).value(z);
}

struct SimulationResult {
  phase::PhaseTrajectory trajectory;
  std::vector<double> energy;   ///< H at every state
  double energy_drift = 0.0;    ///< max |H_k - H_0|
  double min_distance = std::numeric_limits<double>::infinity();
  std::vector<std::string> warnings;
};

inline SimulationResult simulate(const ChargeSystem& s, const phase::PhasePoint& z0, double dt, std::size_t n,
                                 phase::Method method = phase::Method::leapfrog) {
  const phase::Hamiltonian h = signed_hamiltonian(s);
  SimulationResult out;
  out.trajectory = phase::integrate(h, z0, dt, n, method);
  out.energy.reserve(out.trajectory.size());
  const double h0 = h.value(z0);
  for (std::size_t k = 0; k < out.trajectory.size(); ++k) {
    const auto& z = out.trajectory.states[k];
    const double e = h.value(z);
    if (!std::isfinite(e)) throw Error(ErrorCode::numeric, "energy became non-finite", static_cast<long>(k));
    out.energy.push_back(e);
    out.energy_drift = std::max(out.energy_drift, std::abs(e - h0));
    for (const auto& c : s.centers) out.min_distance = std::min(out.min_distance, (c.position - detail::as_vec2(z.q)).norm());
  }
  if (s.epsilon > 0 && out.min_distance < 10 * s.epsilon) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "close encounter: agent came within %.6g px of a charge (softening %.6g px)",
                  out.min_distance, s.epsilon);
    out.warnings.emplace_back(buf);
  }
  return out;
}

/// Runs n steps forward then n steps with -dt; returns |z_back - z0|.
inline double time_reversal_residual(const ChargeSystem& s, const phase::PhasePoint& z0, double dt, std::size_t n,
                                     phase::Method method = phase::Method::leapfrog) {
  const phase::Hamiltonian h = signed_hamiltonian(s);
  phase::PhasePoint z = z0;
  for (std::size_t k = 0; k < n; ++k) z = phase::step(h, z, dt, method);
  for (std::size_t k = 0; k < n; ++k) z = phase::step(h, z, -dt, method);
  return (z.stacked() - z0.stacked()).norm();
}

/// Term-by-term value of the two-centre expression, with q_j = V_j - q,
/// a ^ b - c read as a ^ (b - c), and each prefactor signed like the
/// potential term of H (-s_j).
struct MExpression {
  double momentum_term = 0.0;
  double first_center_term = 0.0;
  double second_center_term = 0.0;  ///< identically 0 as printed (q_2 - q_2)
  double value = 0.0;
};

inline MExpression evaluate_m_expression(const phase::PhasePoint& z, const ChargeSystem& s) {
  s.validate();
  if (s.centers.size() < 2 || s.centers.size() > 3)
    throw Error(ErrorCode::invalid_input, "expression needs centres V1, V2 (and optionally the fixed V3)");
  const Vec2 q = detail::as_vec2(z.q);
  const Vec2 qdot = detail::as_vec2(z.p);
  const auto& c1 = s.centers[0];
  const auto& c2 = s.centers[1];
  const Vec2 q1 = c1.position - q;
  const Vec2 q2 = c2.position - q;
  const double r1 = std::sqrt(detail::softened_r2(s, q1));
  const double r2 = std::sqrt(detail::softened_r2(s, q2));

  MExpression m;
  m.momentum_term = wedge2(q1, qdot) * wedge2(q2, qdot);
  m.first_center_term = -c1.sign * c1.mass / r1 * wedge2(q1, q1 - q2) * wedge2(q2, q1 - q2);
  m.second_center_term = -c2.sign * c2.mass / r2 * wedge2(q1, q2 - q2) * wedge2(q1, q2 - q1);
  m.value = m.momentum_term + m.first_center_term + m.second_center_term;
  return m;
}

/// CSV with columns t,q1,q2,p1,p2,H.
inline void write_trajectory_csv(std::ostream& os, const SimulationResult& r) {
  os << "t,q1,q2,p1,p2,H\n";
  char buf[256];
  for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
    const auto& z = r.trajectory.states[k];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<double>(k) * r.trajectory.dt, z.q[0],
                  z.q[1], z.p[0], z.p[1], r.energy[k]);
    os << buf;
  }
}

}  // namespace kineflow::vp
