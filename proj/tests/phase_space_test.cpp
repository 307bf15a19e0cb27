#include "kineflow/phase_space.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace kineflow::phase {
namespace {

// Leibniz determinant, independent of any factorization.
double leibniz_det(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double det = 0.0;
  do {
    int inversions = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (perm[i] > perm[j]) ++inversions;
    double term = (inversions % 2) ? -1.0 : 1.0;
    for (int i = 0; i < n; ++i) term *= a(i, perm[i]);
    det += term;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return det;
}

// Five-point stencil gradient used as an independent oracle.
Vec stencil_gradient(const Hamiltonian& h, const Vec& z, double step = 1e-3) {
  Vec g(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    auto at = [&](double d) {
      Vec x = z;
      x[i] += d;
      return h.value(PhasePoint::from_stacked(x));
    };
    g[i] = (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12 * step);
  }
  return g;
}

// Dense polynomial in (q, p) for m = 1 up to total degree 3:
// sum c_ij q^i p^j, with the analytic gradient.
struct Poly2 {
  double c[4][4] = {};
  double operator()(double q, double p) const {
    double s = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; i + j < 4; ++j) s += c[i][j] * std::pow(q, i) * std::pow(p, j);
    return s;
  }
  Vec grad(double q, double p) const {
    double gq = 0, gp = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; i + j < 4; ++j) {
        if (i > 0) gq += c[i][j] * i * std::pow(q, i - 1) * std::pow(p, j);
        if (j > 0) gp += c[i][j] * j * std::pow(q, i) * std::pow(p, j - 1);
      }
    return Vec2(gq, gp);
  }
};

Poly2 random_poly(std::mt19937_64& rng, int max_degree) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Poly2 poly;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; i + j <= max_degree && j < 4; ++j) poly.c[i][j] = u(rng);
  return poly;
}

Hamiltonian from_poly(const Poly2& poly, bool analytic) {
  Hamiltonian h;
  h.m = 1;
  h.value = [poly](const PhasePoint& z) { return poly(z.q[0], z.p[0]); };
  if (analytic) h.gradient = [poly](const PhasePoint& z) { return poly.grad(z.q[0], z.p[0]); };
  return h;
}

PhasePoint pt(double q, double p) { return PhasePoint(Vec::Constant(1, q), Vec::Constant(1, p)); }

TEST(CanonicalJ, BlockForm) {
  Mat expected(2, 2);
  expected << 0, 1, -1, 0;
  EXPECT_EQ(canonical_j(1), expected);

  const Mat j2 = canonical_j(2);
  EXPECT_TRUE((j2 * j2).isApprox(-Mat::Identity(4, 4)));
  EXPECT_EQ(j2.transpose(), -j2);

  EXPECT_DOUBLE_EQ(leibniz_det(canonical_j(3)), 1.0);
}

TEST(CanonicalJ, RejectsZeroDimension) {
  try {
    canonical_j(0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_dimension);
  }
}

TEST(PhasePoint, Invariants) {
  EXPECT_THROW(PhasePoint(Vec(0), Vec(0)), Error);
  EXPECT_THROW(PhasePoint(Vec::Zero(2), Vec::Zero(3)), Error);
  EXPECT_THROW(PhasePoint(Vec::Constant(1, NAN), Vec::Zero(1)), Error);
}

TEST(SymplecticGradient, Examples) {
  const Vec sg = symplectic_gradient(builtin::harmonic(1), pt(1, 0));
  EXPECT_EQ(sg, Vec2(0, -1));

  Hamiltonian qp;
  qp.m = 1;
  qp.value = [](const PhasePoint& z) { return z.q[0] * z.p[0]; };
  const Vec g = symplectic_gradient(qp, pt(0.4, -1.3));
  EXPECT_NEAR(g[0], 0.4, 1e-9);
  EXPECT_NEAR(g[1], 1.3, 1e-9);
}

TEST(SymplecticGradient, CubicMatchesFiniteDifferenceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Hamiltonian h = from_poly(random_poly(rng, 3), true);
    const Vec z = Vec2(0.3, -0.7);
    const Vec expected = canonical_j(1) * stencil_gradient(h, z);
    EXPECT_LE((symplectic_gradient(h, PhasePoint::from_stacked(z)) - expected).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(SymplecticGradient, NonFiniteGradientIsNumericError) {
  Hamiltonian h;
  h.m = 1;
  h.value = [](const PhasePoint&) { return 0.0; };
  h.gradient = [](const PhasePoint&) { return Vec2(NAN, 0); };
  try {
    symplectic_gradient(h, pt(0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric);
  }
}

TEST(PoissonBracket, CanonicalRelations) {
  const PhasePoint z(Vec2(0.3, -2.0), Vec2(1.5, 0.7));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(poisson_bracket(builtin::position(2, i), builtin::momentum(2, j), z), i == j ? 1.0 : 0.0);
      EXPECT_EQ(poisson_bracket(builtin::position(2, i), builtin::position(2, j), z), 0.0);
    }
}

TEST(PoissonBracket, PositionWithKinetic) {
  const PhasePoint z(Vec2(0.3, -2.0), Vec2(1.5, 0.7));
  // {q1, |p|^2/2} = dq1/dq1 * d(|p|^2/2)/dp1 = p1
  EXPECT_NEAR(poisson_bracket(builtin::position(2, 0), builtin::free_particle(2), z), 1.5, 1e-12);
}

TEST(PoissonBracket, ArityMismatch) {
  try {
    poisson_bracket(builtin::harmonic(1), builtin::harmonic(2), pt(0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
  }
}

TEST(PoissonBracket, AntisymmetryProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const Hamiltonian f = from_poly(random_poly(rng, 3), trial % 2 == 0);
    const Hamiltonian g = from_poly(random_poly(rng, 3), trial % 3 == 0);
    const PhasePoint z = pt(u(rng), u(rng));
    EXPECT_NEAR(poisson_bracket(f, g, z), -poisson_bracket(g, f, z), 1e-12);
  }
}

TEST(PoissonBracket, JacobiIdentityProperty) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Hamiltonian f = from_poly(random_poly(rng, 2), false);
    Hamiltonian g = from_poly(random_poly(rng, 2), false);
    Hamiltonian k = from_poly(random_poly(rng, 2), false);
    f.fd_step = g.fd_step = k.fd_step = 1e-4;
    const PhasePoint z = pt(u(rng), u(rng));
    const double jac = poisson_bracket(f, bracket_observable(g, k, 1e-3), z) +
                       poisson_bracket(g, bracket_observable(k, f, 1e-3), z) +
                       poisson_bracket(k, bracket_observable(f, g, 1e-3), z);
    EXPECT_LE(std::abs(jac), 1e-6);
  }
}

TEST(ObservableRate, Examples) {
  const PhasePoint z(Vec2(0.5, 1.0), Vec2(-0.2, 0.3));
  EXPECT_NEAR(observable_rate(builtin::harmonic(2), builtin::harmonic(2), z), 0.0, 1e-15);

  // H = |p|^2/2 + q1  =>  dp1/dt = -dH/dq1 = -1
  Hamiltonian h = builtin::separable(
      2, [](const Vec& p) { return 0.5 * p.squaredNorm(); }, [](const Vec& p) { return p; },
      [](const Vec& q) { return q[0]; }, [](const Vec&) { return Vec(Vec2(1, 0)); });
  EXPECT_DOUBLE_EQ(observable_rate(builtin::momentum(2, 0), h, z), -1.0);

  Hamiltonian qp;
  qp.m = 1;
  qp.value = [](const PhasePoint& s) { return s.q[0] * s.p[0]; };
  // d(qp)/dt = p^2 - q^2 under the harmonic flow
  EXPECT_NEAR(observable_rate(qp, builtin::harmonic(1), pt(1, 1)), 0.0, 1e-9);
  EXPECT_NEAR(observable_rate(qp, builtin::harmonic(1), pt(0.5, 2.0)), 4.0 - 0.25, 1e-8);
}

TEST(ObservableRate, MatchesTimeDerivativeAlongFlow) {
  Hamiltonian qp;
  qp.m = 1;
  qp.value = [](const PhasePoint& s) { return s.q[0] * s.p[0]; };
  const PhasePoint z = pt(0.5, 2.0);
  const double dt = 1e-4;
  const auto fwd = step(builtin::harmonic(1), z, dt, Method::implicit_midpoint);
  const auto bwd = step(builtin::harmonic(1), z, -dt, Method::implicit_midpoint);
  const double numeric_rate = (qp(fwd) - qp(bwd)) / (2 * dt);
  EXPECT_NEAR(observable_rate(qp, builtin::harmonic(1), z), numeric_rate, 1e-6);
}

TEST(HamiltonianField, Examples) {
  EXPECT_EQ(hamiltonian_field(builtin::harmonic(1))(Vec2(1, 0)), Vec2(0, -1));
  Vec z(4);
  z << 1, 2, 3, 4;
  Vec expected(4);
  expected << 3, 4, 0, 0;
  EXPECT_EQ(hamiltonian_field(builtin::free_particle(2))(z), expected);
}

TEST(HamiltonianField, SignConventionLock) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const Hamiltonian h = from_poly(random_poly(rng, 3), trial % 2 == 0);
    const PhasePoint z = pt(u(rng), u(rng));
    EXPECT_EQ(hamiltonian_field(h)(z.stacked()), symplectic_gradient(h, z));
  }
}

TEST(Hamiltonian, AnalyticGradientsMatchCentralDifferences) {
  const PhasePoint z(Vec2(0.7, -1.1), Vec2(0.2, 2.5));
  for (const auto& h : {builtin::harmonic(2), builtin::free_particle(2), builtin::zero(2)}) {
    const double step = default_step(z.stacked());
    EXPECT_LE(gradient_check(h, z), 10 * step * step + 1e-9);
  }
}

TEST(Integrate, HarmonicMidpointConservesEnergy) {
  const auto h = builtin::harmonic(1);
  const auto traj = integrate(h, pt(1, 0), 0.01, 10000, Method::implicit_midpoint);
  ASSERT_EQ(traj.size(), 10001u);
  EXPECT_LE(std::abs(h(traj.states.back()) - h(traj.states.front())), 1e-8);
  // Exact solution (cos t, -sin t); midpoint has an O(dt^2) phase error.
  const double t = 100.0;
  EXPECT_NEAR(traj.states.back().q[0], std::cos(t), 1e-2);
  EXPECT_NEAR(traj.states.back().p[0], -std::sin(t), 1e-2);
}

TEST(Integrate, FreeParticleDrift) {
  for (auto method : {Method::leapfrog, Method::implicit_midpoint}) {
    const auto traj = integrate(builtin::free_particle(1), pt(0, 1), 0.1, 10, method);
    EXPECT_NEAR(traj.states.back().q[0], 1.0, 1e-12);
    EXPECT_NEAR(traj.states.back().p[0], 1.0, 1e-12);
  }
}

TEST(Integrate, ZeroHamiltonianIsIdentity) {
  const PhasePoint z0(Vec2(1, 2), Vec2(3, 4));
  for (auto method : {Method::leapfrog, Method::implicit_midpoint}) {
    const auto traj = integrate(builtin::zero(2), z0, 0.5, 7, method);
    for (const auto& s : traj.states) {
      EXPECT_EQ(s.q, z0.q);
      EXPECT_EQ(s.p, z0.p);
    }
  }
}

TEST(Integrate, LeapfrogEnergyBoundedAndNotDrifting) {
  const auto h = builtin::harmonic(1);
  for (double dt : {0.1, 0.05}) {
    const auto traj = integrate(h, pt(1, 0), dt, static_cast<std::size_t>(200 / dt), Method::leapfrog);
    double lo = 1e9, hi = -1e9;
    for (const auto& s : traj.states) {
      lo = std::min(lo, h(s));
      hi = std::max(hi, h(s));
    }
    EXPECT_LE(hi - lo, 0.5 * dt * dt);
  }
}

TEST(Integrate, Errors) {
  Hamiltonian qp;
  qp.m = 1;
  qp.value = [](const PhasePoint& z) { return z.q[0] * z.p[0]; };
  try {
    integrate(qp, pt(1, 1), 0.1, 3, Method::leapfrog);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_method);
  }
  EXPECT_THROW(integrate(builtin::harmonic(1), pt(1, 0), 0.0, 3, Method::leapfrog), Error);

  // A stiff field whose fixed-point map does not contract.
  Hamiltonian stiff;
  stiff.m = 1;
  stiff.value = [](const PhasePoint& z) { return 50.0 * (z.q[0] * z.q[0] + z.p[0] * z.p[0]); };
  try {
    integrate(stiff, pt(1, 0), 1.0, 1, Method::implicit_midpoint);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::convergence);
  }
}

TEST(ContactResiduals, ExactLinearTrajectory) {
  PhaseTrajectory traj;
  traj.dt = 0.25;
  std::vector<Vec> r;
  const Vec p = Vec2(1.5, -0.5);
  for (int k = 0; k < 6; ++k) {
    traj.states.emplace_back(Vec(k * traj.dt * p), p);
    r.push_back(Vec::Zero(2));
  }
  traj.r = r;
  const auto res = contact_residuals(traj);
  EXPECT_EQ(max_norm(res.position), 0.0);
  EXPECT_EQ(max_norm(res.momentum), 0.0);
}

TEST(ContactResiduals, MissingRates) {
  PhaseTrajectory traj;
  traj.dt = 1;
  traj.states = {pt(0, 0), pt(1, 1)};
  EXPECT_NO_THROW(contact_residuals(traj, false));
  try {
    contact_residuals(traj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_data);
  }
}

TEST(ContactResiduals, IntegratedHarmonicAndShuffled) {
  const auto traj = integrate(builtin::harmonic(1), pt(1, 0), 0.01, 2000, Method::implicit_midpoint);
  const auto ordered = contact_residuals(traj);
  EXPECT_LE(max_norm(ordered.position), 1e-4);
  EXPECT_LE(max_norm(ordered.momentum), 1e-4);

  PhaseTrajectory shuffled = traj;
  std::vector<std::size_t> idx(traj.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(1));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    shuffled.states[i] = traj.states[idx[i]];
    (*shuffled.r)[i] = (*traj.r)[idx[i]];
  }
  const auto mixed = contact_residuals(shuffled);
  EXPECT_GE(max_norm(mixed.position), 10 * max_norm(ordered.position));
  EXPECT_GE(max_norm(mixed.momentum), 10 * max_norm(ordered.momentum));
}

TEST(Liouville, HarmonicAndZero) {
  EXPECT_LE(std::abs(liouville_check(builtin::harmonic(1), pt(1, 0), 0.01, 1000)), 1e-8);
  EXPECT_EQ(liouville_check(builtin::zero(1), pt(1, 0), 0.01, 100), 0.0);
}

TEST(Liouville, BuiltinsAndMethods) {
  const PhasePoint z(Vec2(0.3, 1.0), Vec2(-0.4, 0.2));
  for (const auto& h : {builtin::harmonic(2), builtin::free_particle(2), builtin::zero(2)})
    for (auto method : {Method::leapfrog, Method::implicit_midpoint})
      EXPECT_LE(std::abs(liouville_check(h, z, 0.01, 2000, method)), 1e-8);
}

TEST(Liouville, NonSeparableNumericHessian) {
  Hamiltonian h;
  h.m = 1;
  h.value = [](const PhasePoint& z) {
    const double q = z.q[0], p = z.p[0];
    return 0.5 * (q * q + p * p) + 0.1 * q * q * p;
  };
  h.gradient = [](const PhasePoint& z) {
    const double q = z.q[0], p = z.p[0];
    return Vec2(q + 0.2 * q * p, p + 0.1 * q * q);
  };
  EXPECT_LE(std::abs(liouville_check(h, pt(0.5, 0.1), 0.01, 1000)), 1e-8);
}

TEST(Liouville, DissipativeReferenceContracts) {
  const VectorFn damped = [](const Vec& z) { return Vec(Vec2(z[1], -z[0] - 0.1 * z[1])); };
  const double drift = liouville_check_field(damped, Vec2(1, 0), 0.01, 1000);
  EXPECT_LT(drift, -0.5);
  // Analytic contraction e^{-0.1 t} at t = 10.
  EXPECT_NEAR(drift, std::exp(-1.0) - 1.0, 1e-4);
}

}  // namespace
}  // namespace kineflow::phase
