#include "kineflow/flow_analysis.hpp"
#include "kineflow/moment_tensor.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <algorithm>
#include <numbers>

namespace kineflow::moment {
namespace {

using phase::PhasePoint;

template <typename E>
void expect_code(E&& fn, ErrorCode code) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

Mat random_matrix(CounterRng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

TEST(MotionStructureTensor, Examples) {
  const std::vector<GradientSample> flat(5);
  const auto z = motion_structure_tensor(flat);
  EXPECT_EQ(z.second.matrix, Mat(Mat3::Zero()));
  EXPECT_EQ(z.second.rank, 0);

  const std::vector<GradientSample> one{{1, 0, 0}};
  const auto s = motion_structure_tensor(one);
  EXPECT_EQ(s.second.matrix, Mat(Vec3(1, 0, 0).asDiagonal().toDenseMatrix()));
  EXPECT_EQ(s.second.rank, 1);

  // Many samples drawn from span{a, b}: aperture resolved.
  CounterRng rng(1);
  const Vec3 a(1, 2, -1), b(0.5, -1, 3);
  std::vector<GradientSample> two;
  for (int i = 0; i < 50; ++i) {
    const Vec3 g = rng.normal() * a + rng.normal() * b;
    two.push_back({g.x(), g.y(), g.z()});
  }
  EXPECT_EQ(motion_structure_tensor(two).second.rank, 2);
  expect_code([] { motion_structure_tensor(std::vector<GradientSample>{}); }, ErrorCode::invalid_input);
}

TEST(MotionStructureTensor, PsdAndMatchesEigenOracle) {
  CounterRng rng(2);
  for (int t = 0; t < 50; ++t) {
    std::vector<GradientSample> g;
    const int n = 1 + static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i) g.push_back({rng.normal(), rng.normal(), 10 * rng.normal()});
    const auto r = motion_structure_tensor(g).second;
    EXPECT_GE(r.eigenvalues.minCoeff(), -1e-12);
    const Eigen::SelfAdjointEigenSolver<Mat> oracle(r.matrix);
    Vec expected = oracle.eigenvalues().reverse();
    EXPECT_LE((r.eigenvalues - expected).norm(), 1e-10 * std::max(1.0, expected[0]));
    EXPECT_LE(r.rank, 3);
    EXPECT_EQ(r.rank, std::min(n, 3));
  }
}

TEST(MotionStructureTensor, ThirdOrderMoments) {
  const std::vector<GradientSample> g{{1, 2, 0}, {0, 1, -1}};
  const auto r = motion_structure_tensor(g, true);
  ASSERT_TRUE(r.third.has_value());
  const auto& t = *r.third;
  EXPECT_EQ(t[0], 0.5);                     // xxx
  EXPECT_EQ(t[9 * 0 + 3 * 1 + 1], 2.0);     // xyy = (1*4 + 0) / 2
  EXPECT_EQ(t[9 * 1 + 3 * 1 + 2], -0.5);    // yyz
  EXPECT_EQ(t[9 * 1 + 3 * 0 + 1], t[9 * 0 + 3 * 1 + 1]);
  EXPECT_FALSE(motion_structure_tensor(g).third.has_value());
}

TEST(GramMatrices, Examples) {
  Mat j = Mat::Zero(3, 4);
  j.leftCols(3) = Mat::Identity(3, 3);
  const auto a = anticipation(j);
  EXPECT_EQ(a.matrix, Mat(Eigen::Vector4d(1, 1, 1, 0).asDiagonal().toDenseMatrix()));
  EXPECT_EQ(a.rank, 3);
  EXPECT_EQ(compensation(j).matrix, Mat(Mat::Identity(3, 3)));

  const Mat zero = Mat::Zero(3, 4);
  EXPECT_EQ(anticipation(zero).rank, 0);
  EXPECT_EQ(compensation(zero).matrix, Mat(Mat::Zero(3, 3)));
}

TEST(GramMatrices, SharedSpectrumMatchesSingularValues) {
  CounterRng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Mat j = random_matrix(rng, 3, 4, 2.0);
    const auto a = anticipation(j);
    const auto c = compensation(j);
    ASSERT_EQ(a.eigenvalues.size(), 4);
    ASSERT_EQ(c.eigenvalues.size(), 3);
    const Eigen::JacobiSVD<Mat> svd(j);
    for (int i = 0; i < 3; ++i) {
      const double s2 = svd.singularValues()[i] * svd.singularValues()[i];
      EXPECT_NEAR(a.eigenvalues[i], c.eigenvalues[i], 1e-9);
      EXPECT_NEAR(c.eigenvalues[i], s2, 1e-9);
    }
    EXPECT_NEAR(a.eigenvalues[3], 0.0, 1e-9);
    EXPECT_EQ(a.rank, 3);
  }
}

PhasePoint pz(std::initializer_list<double> q, std::initializer_list<double> p) {
  Vec qv(static_cast<Eigen::Index>(q.size())), pv(static_cast<Eigen::Index>(p.size()));
  std::copy(q.begin(), q.end(), qv.data());
  std::copy(p.begin(), p.end(), pv.data());
  return PhasePoint(qv, pv);
}

TEST(MomentMap, Examples) {
  EXPECT_EQ(Vec3(moment_map(GroupAction::rotation3(), pz({1, 0, 0}, {0, 1, 0}))), Vec3(0, 0, 1));
  const auto z = pz({0.3, -2, 5}, {1.5, 0.25, -4});
  EXPECT_EQ(moment_map(GroupAction::translation(), z), z.p);
  EXPECT_EQ(moment_map(GroupAction::linear(Mat::Identity(2, 2)), pz({2, 1}, {3, -1}))[0], 5.0);
  EXPECT_EQ(moment_map(GroupAction::rotation2(), pz({1, 0}, {0, 1}))[0], 1.0);
}

TEST(MomentMap, LinearGeneratorRecoversRotations) {
  Mat so2(2, 2);
  so2 << 0, -1, 1, 0;
  CounterRng rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto z = pz({rng.normal(), rng.normal()}, {rng.normal(), rng.normal()});
    EXPECT_NEAR(moment_map(GroupAction::linear(so2), z)[0], moment_map(GroupAction::rotation2(), z)[0], 1e-14);
  }
  // mu_X for the three so3 generators equals the components of q x p.
  const auto z = pz({0.5, -1, 2}, {3, 1, -0.5});
  const Vec3 l = moment_map(GroupAction::rotation3(), z);
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = 1;
    EXPECT_NEAR(moment_map(GroupAction::linear(hat(e)), z)[0], l[i], 1e-14);
  }
}

TEST(MomentMap, ShapeErrors) {
  expect_code([] { moment_map(GroupAction::rotation3(), pz({1, 0}, {0, 1})); }, ErrorCode::invalid_input);
  expect_code([] { moment_map(GroupAction::rotation2(), pz({1, 0, 0}, {0, 1, 0})); }, ErrorCode::invalid_input);
  expect_code([] { moment_map(GroupAction::linear(Mat::Identity(3, 3)), pz({1, 0}, {0, 1})); }, ErrorCode::invalid_input);
}

TEST(MomentMap, SameFormulaAsRegionMomenta) {
  CounterRng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Vec2 g(rng.uniform(0, 640), rng.uniform(0, 480));
    const Vec2 v(rng.normal(), rng.normal());
    const auto region = flow::region_momenta(1.0, g, v);
    const auto z = pz({g.x(), g.y()}, {v.x(), v.y()});
    EXPECT_EQ(Vec2(moment_map(GroupAction::translation(), z)), region.linear);
    EXPECT_EQ(moment_map(GroupAction::rotation2(), z)[0], region.angular);
    const auto z3 = pz({g.x(), g.y(), 0}, {v.x(), v.y(), 0});
    EXPECT_EQ(moment_map(GroupAction::rotation3(), z3)[2], region.angular);
  }
}

TEST(MomentMap, ConservedAlongSymmetricFlows) {
  const auto z0 = pz({1, -0.5, 0.25}, {0.3, 0.7, -0.2});
  const auto free = phase::integrate(phase::builtin::free_particle(3), z0, 0.01, 1000, phase::Method::leapfrog);
  const auto osc = phase::integrate(phase::builtin::harmonic(3), z0, 0.01, 1000, phase::Method::implicit_midpoint);
  const Vec p0 = moment_map(GroupAction::translation(), z0);
  const Vec l0 = moment_map(GroupAction::rotation3(), z0);
  for (const auto& z : free.states) {
    EXPECT_LE((moment_map(GroupAction::translation(), z) - p0).norm(), 1e-8);
    EXPECT_LE((moment_map(GroupAction::rotation3(), z) - l0).norm(), 1e-8);
  }
  for (const auto& z : osc.states) EXPECT_LE((moment_map(GroupAction::rotation3(), z) - l0).norm(), 1e-8);
}

TEST(Equivariance, Examples) {
  const auto z = pz({1, 0, 0}, {0, 1, 0});
  const std::vector<Mat3> ident{Mat3::Identity()};
  EXPECT_EQ(equivariance_check(ident, z), 0.0);
  const std::vector<Mat3> quarter{Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()).toRotationMatrix()};
  EXPECT_LE(equivariance_check(quarter, z), 1e-12);

  CounterRng rng(6);
  std::vector<Mat3> gs;
  for (int i = 0; i < 100; ++i) gs.push_back(random_rotation(rng));
  for (const auto& g : gs) {
    EXPECT_LE((g.transpose() * g - Mat3::Identity()).norm(), 1e-14);
    EXPECT_NEAR(g.determinant(), 1.0, 1e-14);
  }
  for (int t = 0; t < 10; ++t) {
    const auto zr = pz({rng.normal(), rng.normal(), rng.normal()}, {rng.normal(), rng.normal(), rng.normal()});
    EXPECT_LE(equivariance_check(gs, zr), 1e-10);
  }
}

TEST(LieExp, Examples) {
  EXPECT_EQ(lie_exp(LieAlgebraElement::make(Algebra::so3, Mat::Zero(3, 3))), Mat(Mat::Identity(3, 3)));
  EXPECT_EQ(lie_exp(LieAlgebraElement::make(Algebra::so2, Mat::Zero(2, 2))), Mat(Mat::Identity(2, 2)));
  const Mat r = lie_exp(LieAlgebraElement::make(Algebra::so3, hat(Vec3(0, 0, std::numbers::pi / 2))));
  EXPECT_LE((r * Vec3::UnitX() - Vec3::UnitY()).norm(), 1e-12);
  Mat x(2, 2);
  x << 0, -std::numbers::pi / 2, std::numbers::pi / 2, 0;
  EXPECT_LE((lie_exp(LieAlgebraElement::make(Algebra::so2, x)) * Vec2::UnitX() - Vec2::UnitY()).norm(), 1e-12);
}

TEST(LieExp, MatchesMatrixExponentialSeries) {
  CounterRng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Mat3 k = hat(Vec3(rng.normal(), rng.normal(), rng.normal()));
    Mat3 series = Mat3::Identity(), term = Mat3::Identity();
    for (int i = 1; i < 40; ++i) {
      term = term * k / static_cast<double>(i);
      series += term;
    }
    EXPECT_LE((lie_exp(LieAlgebraElement::make(Algebra::so3, k)) - Mat(series)).norm(), 1e-12);
  }
}

TEST(LieLog, RoundTrip) {
  CounterRng rng(8);
  for (int t = 0; t < 100; ++t) {
    const Vec3 w = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized() * 0.3;
    const auto x = LieAlgebraElement::make(Algebra::so3, hat(w));
    EXPECT_LE((lie_log(lie_exp(x)).X - x.X).norm(), 1e-10);
  }
  for (double th : {1e-9, 1e-5, 0.1, 1.0, 2.5, 3.1}) {
    const auto x = LieAlgebraElement::make(Algebra::so3, hat(th * Vec3(2, -1, 0.5).normalized()));
    EXPECT_LE((lie_log(lie_exp(x)).X - x.X).norm(), 1e-10) << th;
    Mat x2(2, 2);
    x2 << 0, -th, th, 0;
    const auto e2 = LieAlgebraElement::make(Algebra::so2, x2);
    EXPECT_LE((lie_log(lie_exp(e2)).X - x2).norm(), 1e-10) << th;
  }
}

TEST(LieLog, Errors) {
  const Mat half_turn = Eigen::AngleAxisd(std::numbers::pi, Vec3(1, 1, 0).normalized()).toRotationMatrix();
  expect_code([&] { lie_log(half_turn); }, ErrorCode::ambiguous_axis);
  expect_code([] { lie_log(Mat(-Mat::Identity(2, 2))); }, ErrorCode::ambiguous_axis);
  expect_code([] { lie_log(Mat(2 * Mat::Identity(3, 3))); }, ErrorCode::invalid_input);
  expect_code([] { lie_log(Mat(Vec3(1, 1, -1).asDiagonal().toDenseMatrix())); }, ErrorCode::invalid_input);
  expect_code([] { LieAlgebraElement::make(Algebra::so3, Mat::Identity(3, 3)); }, ErrorCode::invalid_input);
  expect_code([] { LieAlgebraElement::make(Algebra::sl, Mat::Identity(3, 3)); }, ErrorCode::invalid_input);
}

TEST(Project, Examples) {
  EXPECT_EQ(project(Algebra::sl, Mat::Identity(3, 3)).X, Mat(Mat::Zero(3, 3)));
  Mat sym(3, 3);
  sym << 1, 2, 3, 2, 4, 5, 3, 5, 6;
  EXPECT_EQ(project(Algebra::so3, sym).X, Mat(Mat::Zero(3, 3)));
  Mat h(2, 2);
  h << 1, 0, 0, -1;
  EXPECT_EQ(project(Algebra::sp, h).X, h);
  expect_code([] { project(Algebra::sp, Mat::Identity(3, 3)); }, ErrorCode::invalid_input);
  expect_code([] { project(Algebra::so2, Mat::Identity(3, 3)); }, ErrorCode::invalid_input);
  expect_code([] { project(Algebra::sl, Mat::Zero(2, 3)); }, ErrorCode::invalid_input);
}

TEST(Project, IdempotentContractiveAndOrthogonal) {
  CounterRng rng(9);
  const std::vector<std::pair<Algebra, Eigen::Index>> cases{
      {Algebra::so2, 2}, {Algebra::so3, 3}, {Algebra::sl, 2}, {Algebra::sl, 5}, {Algebra::sp, 2}, {Algebra::sp, 4}, {Algebra::sp, 6}};
  for (const auto& [alg, n] : cases)
    for (int t = 0; t < 20; ++t) {
      const Mat m = random_matrix(rng, n, n, 3.0);
      const Mat p = project(alg, m).X;
      EXPECT_LE((project(alg, p).X - p).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LE(p.norm(), m.norm() + 1e-12);
      // Residual is Frobenius-orthogonal to the algebra: check against another element.
      const Mat other = project(alg, random_matrix(rng, n, n)).X;
      EXPECT_NEAR(((m - p).cwiseProduct(other)).sum(), 0.0, 1e-12 * (1 + m.norm()));
    }
}

TEST(Project, SpHasHamiltonianExponential) {
  CounterRng rng(10);
  const Mat j = phase::canonical_j(2);
  for (int t = 0; t < 10; ++t) {
    const Mat x = project(Algebra::sp, random_matrix(rng, 4, 4, 0.3)).X;
    // exp(X) is symplectic: M^T J M = J.
    Mat e = Mat::Identity(4, 4), term = Mat::Identity(4, 4);
    for (int i = 1; i < 30; ++i) {
      term = term * x / static_cast<double>(i);
      e += term;
    }
    EXPECT_LE((e.transpose() * j * e - j).norm(), 1e-12);
  }
}

}  // namespace
}  // namespace kineflow::moment
