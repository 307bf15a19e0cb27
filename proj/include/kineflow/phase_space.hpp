#pragma once

// Canonical symplectic mechanics on R^{2m}: symplectic gradient, Poisson
// brackets, Hamiltonian vector fields, structure-preserving integrators,
// contact residuals and phase-space volume checks.
//
// Sign convention: X_H = (dH/dp, -dH/dq) = J grad H with J = [[0, I], [-I, 0]],
// so that {q_i, p_j} = delta_ij and dF/dt = {F, H}.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kineflow/error.hpp"
#include "kineflow/numerics.hpp"

namespace kineflow::phase {

/// Position/momentum pair in a 2m-dimensional phase space.
struct PhasePoint {
  Vec q;
  Vec p;

  PhasePoint() = default;
  PhasePoint(Vec q_, Vec p_) : q(std::move(q_)), p(std::move(p_)) { validate(); }

  static PhasePoint from_stacked(const Vec& z) {
    if (z.size() == 0 || z.size() % 2 != 0)
      throw Error(ErrorCode::invalid_dimension, "stacked phase vector must have even positive length");
    const Eigen::Index m = z.size() / 2;
    return PhasePoint(z.head(m), z.tail(m));
  }

  std::size_t dim() const { return static_cast<std::size_t>(q.size()); }

  Vec stacked() const {
    Vec z(q.size() + p.size());
    z << q, p;
    return z;
  }

  void validate() const {
    if (q.size() == 0) throw Error(ErrorCode::invalid_dimension, "phase point needs m >= 1");
    if (q.size() != p.size()) throw Error(ErrorCode::invalid_dimension, "q and p must have equal length");
    if (!q.allFinite() || !p.allFinite()) throw Error(ErrorCode::numeric, "phase point has non-finite entries");
  }
};

/// Sampled trajectory; `r` holds the momentum rates (dp/dt) when known.
struct PhaseTrajectory {
  double dt = 0.0;
  std::vector<PhasePoint> states;
  std::optional<std::vector<Vec>> r;

  std::size_t size() const { return states.size(); }
};

/// Observable / Hamiltonian on phase space. `gradient` and `hessian` are
/// optional analytic derivatives over the stacked coordinates (q, p).
/// When `separable` is set the function is T(p) + V(q) and leapfrog applies.
struct Hamiltonian {
  struct Separable {
    std::function<Vec(const Vec& p)> kinetic_gradient;
    std::function<Vec(const Vec& q)> potential_gradient;
  };

  std::size_t m = 0;
  std::function<double(const PhasePoint&)> value;
  std::function<Vec(const PhasePoint&)> gradient;
  std::function<Mat(const PhasePoint&)> hessian;
  std::optional<Separable> separable;
  /// Finite-difference step override; 0 selects max(1e-6, 1e-8 |z|_inf).
  double fd_step = 0.0;

  double operator()(const PhasePoint& z) const { return value(z); }
};

inline double default_step(const Vec& z) {
  return std::max(1e-6, 1e-8 * (z.size() ? z.cwiseAbs().maxCoeff() : 0.0));
}

inline void check_arity(const Hamiltonian& h, const PhasePoint& z) {
  if (h.m == 0) throw Error(ErrorCode::invalid_dimension, "Hamiltonian arity must be >= 1");
  if (z.dim() != h.m)
    throw Error(ErrorCode::invalid_input,
                "phase point dimension " + std::to_string(z.dim()) + " does not match arity " + std::to_string(h.m));
}

/// Central-difference gradient over the stacked coordinates.
inline Vec numeric_gradient(const Hamiltonian& h, const PhasePoint& z) {
  const Vec zs = z.stacked();
  const double step = h.fd_step > 0 ? h.fd_step : default_step(zs);
  return numdiff::gradient([&](const Vec& x) { return h.value(PhasePoint::from_stacked(x)); }, zs, step);
}

inline Vec gradient(const Hamiltonian& h, const PhasePoint& z) {
  check_arity(h, z);
  Vec g = h.gradient ? h.gradient(z) : numeric_gradient(h, z);
  if (g.size() != static_cast<Eigen::Index>(2 * h.m))
    throw Error(ErrorCode::invalid_dimension, "gradient length must be 2m");
  if (!g.allFinite()) throw Error(ErrorCode::numeric, "non-finite gradient");
  return g;
}

/// Symmetric Hessian: analytic when supplied, else differences of the gradient.
inline Mat hessian(const Hamiltonian& h, const PhasePoint& z) {
  check_arity(h, z);
  if (h.hessian) return h.hessian(z);
  const Vec zs = z.stacked();
  const double step = h.fd_step > 0 ? h.fd_step : default_step(zs);
  Mat hs = numdiff::jacobian([&](const Vec& x) { return gradient(h, PhasePoint::from_stacked(x)); }, zs, step);
  return 0.5 * (hs + hs.transpose());
}

/// Relative disagreement between the analytic gradient and central differences.
inline double gradient_check(const Hamiltonian& h, const PhasePoint& z) {
  check_arity(h, z);
  if (!h.gradient) return 0.0;
  const Vec a = h.gradient(z);
  const Vec n = numeric_gradient(h, z);
  return (a - n).norm() / std::max(1.0, a.norm());
}

/// Block matrix [[0, I], [-I, 0]] of size 2m.
inline Mat canonical_j(std::size_t m) {
  if (m == 0) throw Error(ErrorCode::invalid_dimension, "canonical_j needs m >= 1");
  const auto n = static_cast<Eigen::Index>(m);
  Mat j = Mat::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n) = Mat::Identity(n, n);
  j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return j;
}

/// J applied to a stacked vector without forming J: (a, b) -> (b, -a).
inline Vec apply_j(const Vec& v) {
  const Eigen::Index m = v.size() / 2;
  Vec out(v.size());
  out.head(m) = v.tail(m);
  out.tail(m) = -v.head(m);
  return out;
}

inline Vec symplectic_gradient(const Hamiltonian& h, const PhasePoint& z) { return apply_j(gradient(h, z)); }

inline double poisson_bracket(const Hamiltonian& f, const Hamiltonian& g, const PhasePoint& z) {
  if (f.m != g.m) throw Error(ErrorCode::invalid_input, "Poisson bracket of observables with different arity");
  const Vec df = gradient(f, z);
  const Vec dg = gradient(g, z);
  const auto m = static_cast<Eigen::Index>(f.m);
  return df.head(m).dot(dg.tail(m)) - df.tail(m).dot(dg.head(m));
}

/// dF/dt along the flow of H.
inline double observable_rate(const Hamiltonian& f, const Hamiltonian& h, const PhasePoint& z) {
  return poisson_bracket(f, h, z);
}

/// Vector field z -> (dH/dp, -dH/dq) over stacked coordinates.
inline VectorFn hamiltonian_field(Hamiltonian h) {
  return [h = std::move(h)](const Vec& z) -> Vec {
    const PhasePoint pz = PhasePoint::from_stacked(z);
    const Vec g = gradient(h, pz);
    const auto m = static_cast<Eigen::Index>(h.m);
    Vec x(2 * m);
    x.head(m) = g.tail(m);
    x.tail(m) = -g.head(m);
    return x;
  };
}

/// The observable z -> {F, G}(z), usable as a Hamiltonian itself.
inline Hamiltonian bracket_observable(Hamiltonian f, Hamiltonian g, double fd_step = 0.0) {
  Hamiltonian out;
  out.m = f.m;
  out.value = [f = std::move(f), g = std::move(g)](const PhasePoint& z) { return poisson_bracket(f, g, z); };
  out.fd_step = fd_step;
  return out;
}

// ---------------------------------------------------------------------------
// Built-in Hamiltonians.

namespace builtin {

/// T(p) + V(q) with analytic gradients.
inline Hamiltonian separable(std::size_t m, std::function<double(const Vec&)> kinetic,
                             std::function<Vec(const Vec&)> kinetic_gradient, std::function<double(const Vec&)> potential,
                             std::function<Vec(const Vec&)> potential_gradient) {
  Hamiltonian h;
  h.m = m;
  h.value = [kinetic, potential](const PhasePoint& z) { return kinetic(z.p) + potential(z.q); };
  h.gradient = [kinetic_gradient, potential_gradient](const PhasePoint& z) {
    Vec g(z.q.size() + z.p.size());
    g << potential_gradient(z.q), kinetic_gradient(z.p);
    return g;
  };
  h.separable = Hamiltonian::Separable{std::move(kinetic_gradient), std::move(potential_gradient)};
  return h;
}

/// 1/2 (|q|^2 + |p|^2)
inline Hamiltonian harmonic(std::size_t m) {
  Hamiltonian h = separable(
      m, [](const Vec& p) { return 0.5 * p.squaredNorm(); }, [](const Vec& p) { return p; },
      [](const Vec& q) { return 0.5 * q.squaredNorm(); }, [](const Vec& q) { return q; });
  h.hessian = [m](const PhasePoint&) { return Mat::Identity(2 * static_cast<Eigen::Index>(m), 2 * static_cast<Eigen::Index>(m)); };
  return h;
}

/// 1/2 |p|^2
inline Hamiltonian free_particle(std::size_t m) {
  Hamiltonian h = separable(
      m, [](const Vec& p) { return 0.5 * p.squaredNorm(); }, [](const Vec& p) { return p; },
      [](const Vec&) { return 0.0; }, [](const Vec& q) { return Vec(Vec::Zero(q.size())); });
  h.hessian = [m](const PhasePoint&) {
    const auto n = static_cast<Eigen::Index>(m);
    Mat hs = Mat::Zero(2 * n, 2 * n);
    hs.bottomRightCorner(n, n).setIdentity();
    return hs;
  };
  return h;
}

inline Hamiltonian zero(std::size_t m) {
  Hamiltonian h = separable(
      m, [](const Vec&) { return 0.0; }, [](const Vec& p) { return Vec(Vec::Zero(p.size())); },
      [](const Vec&) { return 0.0; }, [](const Vec& q) { return Vec(Vec::Zero(q.size())); });
  h.hessian = [m](const PhasePoint&) {
    return Mat::Zero(2 * static_cast<Eigen::Index>(m), 2 * static_cast<Eigen::Index>(m));
  };
  return h;
}

/// Coordinate observables q_i and p_i (0-based index).
inline Hamiltonian position(std::size_t m, std::size_t i) {
  Hamiltonian h;
  h.m = m;
  h.value = [i](const PhasePoint& z) { return z.q[static_cast<Eigen::Index>(i)]; };
  h.gradient = [m, i](const PhasePoint&) {
    Vec g = Vec::Zero(2 * static_cast<Eigen::Index>(m));
    g[static_cast<Eigen::Index>(i)] = 1.0;
    return g;
  };
  return h;
}

inline Hamiltonian momentum(std::size_t m, std::size_t i) {
  Hamiltonian h;
  h.m = m;
  h.value = [i](const PhasePoint& z) { return z.p[static_cast<Eigen::Index>(i)]; };
  h.gradient = [m, i](const PhasePoint&) {
    Vec g = Vec::Zero(2 * static_cast<Eigen::Index>(m));
    g[static_cast<Eigen::Index>(m + i)] = 1.0;
    return g;
  };
  return h;
}

}  // namespace builtin

// ---------------------------------------------------------------------------
// Integration.

enum class Method { leapfrog, implicit_midpoint };

inline const char* to_string(Method m) { return m == Method::leapfrog ? "leapfrog" : "implicit-midpoint"; }

namespace detail {

inline constexpr int kMidpointMaxIterations = 100;
inline constexpr double kMidpointTolerance = 1e-12;

/// One implicit-midpoint step of a general field; returns the new state and
/// the midpoint at which the field was evaluated.
inline std::pair<Vec, Vec> midpoint_step(const VectorFn& field, const Vec& z0, double dt) {
  Vec z1 = z0 + dt * field(z0);
  for (int it = 0; it < kMidpointMaxIterations; ++it) {
    const Vec mid = 0.5 * (z0 + z1);
    Vec next;
    try {
      next = z0 + dt * field(mid);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numeric) throw;
      next = Vec::Constant(z0.size(), NAN);
    }
    // A diverging fixed-point iteration is a convergence failure.
    if (!next.allFinite())
      throw Error(ErrorCode::convergence, "implicit midpoint fixed-point iteration diverged");
    const double delta = (next - z1).cwiseAbs().maxCoeff();
    z1 = next;
    if (delta <= kMidpointTolerance * std::max(1.0, z1.cwiseAbs().maxCoeff())) return {z1, 0.5 * (z0 + z1)};
  }
  throw Error(ErrorCode::convergence, "implicit midpoint fixed-point iteration did not converge in 100 iterations");
}

/// Kick-drift-kick Stoermer-Verlet step.
inline PhasePoint leapfrog_step(const Hamiltonian::Separable& s, const PhasePoint& z, double dt) {
  const Vec p_half = z.p - 0.5 * dt * s.potential_gradient(z.q);
  const Vec q1 = z.q + dt * s.kinetic_gradient(p_half);
  const Vec p1 = p_half - 0.5 * dt * s.potential_gradient(q1);
  return PhasePoint(q1, p1);
}

inline Vec momentum_rate(const Hamiltonian& h, const PhasePoint& z) {
  return -gradient(h, z).head(static_cast<Eigen::Index>(h.m));
}

inline void check_step(double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::invalid_input, "dt must be positive");
}

}  // namespace detail

/// Advances one step of the chosen method. Negative dt is allowed here so
/// callers can run the (time-symmetric) methods backwards.
inline PhasePoint step(const Hamiltonian& h, const PhasePoint& z, double dt, Method method) {
  check_arity(h, z);
  if (method == Method::leapfrog) {
    if (!h.separable) throw Error(ErrorCode::invalid_method, "leapfrog requires a separable Hamiltonian T(p) + V(q)");
    return detail::leapfrog_step(*h.separable, z, dt);
  }
  const VectorFn field = hamiltonian_field(h);
  return PhasePoint::from_stacked(detail::midpoint_step(field, z.stacked(), dt).first);
}

/// n steps of size dt; the trajectory carries n + 1 states and momentum rates.
inline PhaseTrajectory integrate(const Hamiltonian& h, const PhasePoint& z0, double dt, std::size_t n, Method method) {
  detail::check_step(dt);
  check_arity(h, z0);
  if (method == Method::leapfrog && !h.separable)
    throw Error(ErrorCode::invalid_method, "leapfrog requires a separable Hamiltonian T(p) + V(q)");

  PhaseTrajectory traj;
  traj.dt = dt;
  traj.states.reserve(n + 1);
  std::vector<Vec> rates;
  rates.reserve(n + 1);
  traj.states.push_back(z0);
  rates.push_back(detail::momentum_rate(h, z0));
  for (std::size_t k = 0; k < n; ++k) {
    traj.states.push_back(step(h, traj.states.back(), dt, method));
    rates.push_back(detail::momentum_rate(h, traj.states.back()));
  }
  traj.r = std::move(rates);
  return traj;
}

// ---------------------------------------------------------------------------
// Contact residuals.

struct ContactResiduals {
  std::vector<Vec> position;  ///< (q_{k+1} - q_k) - dt (p_k + p_{k+1}) / 2
  std::vector<Vec> momentum;  ///< (p_{k+1} - p_k) - dt (r_k + r_{k+1}) / 2; empty unless requested
};

inline ContactResiduals contact_residuals(const PhaseTrajectory& traj, bool with_momentum = true) {
  if (traj.states.size() < 2) throw Error(ErrorCode::invalid_input, "contact residuals need at least two states");
  const std::size_t m = traj.states.front().dim();
  for (const auto& s : traj.states)
    if (s.dim() != m) throw Error(ErrorCode::invalid_dimension, "trajectory states differ in dimension");
  if (with_momentum && (!traj.r || traj.r->size() != traj.states.size()))
    throw Error(ErrorCode::missing_data, "momentum residual requires rates r for every state");

  ContactResiduals out;
  const double dt = traj.dt;
  for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
    const auto& a = traj.states[k];
    const auto& b = traj.states[k + 1];
    out.position.push_back((b.q - a.q) - 0.5 * dt * (a.p + b.p));
    if (with_momentum) out.momentum.push_back((b.p - a.p) - 0.5 * dt * ((*traj.r)[k] + (*traj.r)[k + 1]));
  }
  return out;
}

inline double max_norm(const std::vector<Vec>& series) {
  double m = 0.0;
  for (const auto& v : series) m = std::max(m, v.norm());
  return m;
}

// ---------------------------------------------------------------------------
// Phase-space volume.

/// Integrates a general (possibly non-Hamiltonian) field with implicit
/// midpoint while propagating the tangent map of each discrete step,
/// (I - dt/2 A)^{-1} (I + dt/2 A) with A the field Jacobian at the midpoint.
/// Returns |det(tangent map)| - 1.
inline double liouville_check_field(const VectorFn& field, const Vec& z0, double dt, std::size_t n,
                                    const std::function<Mat(const Vec&)>& field_jacobian = {}) {
  detail::check_step(dt);
  const Eigen::Index d = z0.size();
  if (d == 0) throw Error(ErrorCode::invalid_dimension, "empty state");
  Mat tangent = Mat::Identity(d, d);
  const Mat eye = Mat::Identity(d, d);
  Vec z = z0;
  for (std::size_t k = 0; k < n; ++k) {
    auto [z1, mid] = detail::midpoint_step(field, z, dt);
    const Mat a = field_jacobian ? field_jacobian(mid) : numdiff::jacobian(field, mid, default_step(mid));
    const Mat step_map = (eye - 0.5 * dt * a).partialPivLu().solve(eye + 0.5 * dt * a);
    tangent = step_map * tangent;
    z = std::move(z1);
  }
  return std::abs(tangent.determinant()) - 1.0;
}

/// Volume drift of the discrete Hamiltonian flow, from the tangent map of
/// the chosen integrator.
inline double liouville_check(const Hamiltonian& h, const PhasePoint& z0, double dt, std::size_t n,
                              Method method = Method::implicit_midpoint) {
  detail::check_step(dt);
  check_arity(h, z0);
  const auto m = static_cast<Eigen::Index>(h.m);
  if (method == Method::implicit_midpoint) {
    const Mat jm = canonical_j(h.m);
    return liouville_check_field(hamiltonian_field(h), z0.stacked(), dt, n, [&](const Vec& z) -> Mat {
      return jm * hessian(h, PhasePoint::from_stacked(z));
    });
  }
  if (!h.separable) throw Error(ErrorCode::invalid_method, "leapfrog requires a separable Hamiltonian T(p) + V(q)");
  const auto& s = *h.separable;
  const auto sym_jac = [](const std::function<Vec(const Vec&)>& g, const Vec& x) -> Mat {
    Mat jac = numdiff::jacobian(g, x, default_step(x));
    return 0.5 * (jac + jac.transpose());
  };
  Mat tangent = Mat::Identity(2 * m, 2 * m);
  PhasePoint z = z0;
  for (std::size_t k = 0; k < n; ++k) {
    // Tangent of kick-drift-kick: three unit-triangular shears.
    const Vec p_half = z.p - 0.5 * dt * s.potential_gradient(z.q);
    const Vec q1 = z.q + dt * s.kinetic_gradient(p_half);
    Mat kick1 = Mat::Identity(2 * m, 2 * m);
    kick1.bottomLeftCorner(m, m) = -0.5 * dt * sym_jac(s.potential_gradient, z.q);
    Mat drift = Mat::Identity(2 * m, 2 * m);
    drift.topRightCorner(m, m) = dt * sym_jac(s.kinetic_gradient, p_half);
    Mat kick2 = Mat::Identity(2 * m, 2 * m);
    kick2.bottomLeftCorner(m, m) = -0.5 * dt * sym_jac(s.potential_gradient, q1);
    tangent = kick2 * drift * kick1 * tangent;
    z = detail::leapfrog_step(s, z, dt);
  }
  return std::abs(tangent.determinant()) - 1.0;
}

}  // namespace kineflow::phase
