#pragma once

// Motion structure tensor, anticipation / compensation Gram matrices, moment
// maps of cotangent-lifted linear actions, and small Lie algebra helpers.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "kineflow/error.hpp"
#include "kineflow/numerics.hpp"
#include "kineflow/phase_space.hpp"
#include "kineflow/random.hpp"

namespace kineflow::moment {

struct GradientSample {
  double Ix = 0.0;
  double Iy = 0.0;
  double It = 0.0;

  Vec3 vector() const { return Vec3(Ix, Iy, It); }
};

struct SymmetricTensorReport {
  Mat matrix;
  Vec eigenvalues;   ///< descending
  Mat eigenvectors;  ///< columns follow eigenvalues
  int rank = 0;
  double tolerance = 1e-9;  ///< relative; threshold is tolerance * max(1, lambda_max)
};

inline SymmetricTensorReport symmetric_report(const Mat& m, double tolerance = 1e-9) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::invalid_input, "tensor must be square");
  if (!m.allFinite()) throw Error(ErrorCode::numeric, "tensor has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw Error(ErrorCode::invalid_input, "tensor is not symmetric");
  SymmetricTensorReport r;
  r.matrix = 0.5 * (m + m.transpose());
  r.tolerance = tolerance;
  const SymmetricEigen eig = jacobi_eigen(r.matrix);
  r.eigenvalues = eig.values;
  r.eigenvectors = eig.vectors;
  const double lmax = r.eigenvalues.size() ? r.eigenvalues[0] : 0.0;
  const double threshold = tolerance * std::max(1.0, lmax);
  for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) r.rank += r.eigenvalues[i] > threshold;
  return r;
}

struct MotionStructure {
  SymmetricTensorReport second;
  /// Raw third moments (1/N) sum g_a g_b g_c, index 9 a + 3 b + c.
  std::optional<std::array<double, 27>> third;
};

/// (1/N) sum g g^T with g = (Ix, Iy, It).
inline MotionStructure motion_structure_tensor(std::span<const GradientSample> samples, bool third_order = false,
                                               double tolerance = 1e-9) {
  if (samples.empty()) throw Error(ErrorCode::invalid_input, "motion structure tensor needs >= 1 sample");
  Mat3 s = Mat3::Zero();
  std::array<double, 27> t{};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec3 g = samples[i].vector();
    if (!g.allFinite()) throw Error(ErrorCode::invalid_input, "gradient sample is not finite", static_cast<long>(i));
    s += g * g.transpose();
    if (third_order)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          for (int c = 0; c < 3; ++c) t[static_cast<std::size_t>(9 * a + 3 * b + c)] += g[a] * g[b] * g[c];
  }
  const double n = static_cast<double>(samples.size());
  MotionStructure out;
  out.second = symmetric_report(Mat(s / n), tolerance);
  if (third_order) {
    for (auto& v : t) v /= n;
    out.third = t;
  }
  return out;
}

/// J^T J (q x q).
inline SymmetricTensorReport anticipation(const Mat& jm, double tolerance = 1e-9) {
  if (!jm.allFinite()) throw Error(ErrorCode::invalid_input, "Jacobian has non-finite entries");
  return symmetric_report(jm.transpose() * jm, tolerance);
}

/// J J^T (p x p).
inline SymmetricTensorReport compensation(const Mat& jm, double tolerance = 1e-9) {
  if (!jm.allFinite()) throw Error(ErrorCode::invalid_input, "Jacobian has non-finite entries");
  return symmetric_report(jm * jm.transpose(), tolerance);
}

// ---------------------------------------------------------------------------
// Moment maps.

enum class ActionKind { translation, so2, so3, linear };

struct GroupAction {
  ActionKind kind = ActionKind::translation;
  Mat generator;  ///< m x m, only for linear

  static GroupAction translation() { return {ActionKind::translation, {}}; }
  static GroupAction rotation2() { return {ActionKind::so2, {}}; }
  static GroupAction rotation3() { return {ActionKind::so3, {}}; }
  static GroupAction linear(Mat x) { return {ActionKind::linear, std::move(x)}; }
};

/// Cotangent-lift pairing mu_X(q, p) = p . (X q).
inline Vec moment_map(const GroupAction& action, const phase::PhasePoint& z) {
  const auto m = static_cast<Eigen::Index>(z.dim());
  switch (action.kind) {
    case ActionKind::translation:
      return z.p;
    case ActionKind::so2:
      if (m != 2) throw Error(ErrorCode::invalid_input, "so2 action needs m = 2");
      return Vec::Constant(1, z.q[0] * z.p[1] - z.q[1] * z.p[0]);
    case ActionKind::so3: {
      if (m != 3) throw Error(ErrorCode::invalid_input, "so3 action needs m = 3");
      const Vec3 q(z.q[0], z.q[1], z.q[2]);
      const Vec3 p(z.p[0], z.p[1], z.p[2]);
      return Vec(q.cross(p));
    }
    case ActionKind::linear:
      if (action.generator.rows() != m || action.generator.cols() != m)
        throw Error(ErrorCode::invalid_input, "linear generator must be m x m");
      return Vec::Constant(1, z.p.dot(action.generator * z.q));
  }
  throw Error(ErrorCode::invalid_input, "unknown action");
}

/// Uniform random rotation from a normalised Gaussian quaternion.
inline Mat3 random_rotation(CounterRng& rng) {
  Eigen::Quaterniond quat(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  quat.normalize();
  return quat.toRotationMatrix();
}

/// max_g |mu(g q, g p) - g mu(q, p)| for the so3 action.
inline double equivariance_check(std::span<const Mat3> rotations, const phase::PhasePoint& z) {
  const GroupAction so3 = GroupAction::rotation3();
  const Vec3 mu = moment_map(so3, z);
  double worst = 0.0;
  for (const auto& g : rotations) {
    const phase::PhasePoint gz(Vec(g * Vec3(z.q)), Vec(g * Vec3(z.p)));
    worst = std::max(worst, (Vec3(moment_map(so3, gz)) - g * mu).norm());
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Lie algebras.

enum class Algebra { so2, so3, sl, sp };

inline const char* to_string(Algebra a) {
  switch (a) {
    case Algebra::so2: return "so2";
    case Algebra::so3: return "so3";
    case Algebra::sl: return "sl";
    case Algebra::sp: return "sp";
  }
  return "unknown";
}

struct LieAlgebraElement {
  Algebra algebra = Algebra::so3;
  Mat X;

  static LieAlgebraElement make(Algebra a, Mat x) {
    LieAlgebraElement e{a, std::move(x)};
    e.validate();
    return e;
  }

  void validate() const {
    if (X.rows() != X.cols() || X.rows() == 0) throw Error(ErrorCode::invalid_input, "algebra element must be square");
    if (!X.allFinite()) throw Error(ErrorCode::invalid_input, "algebra element is not finite");
    const Eigen::Index n = X.rows();
    const double tol = 1e-12 * std::max(1.0, X.cwiseAbs().maxCoeff());
    switch (algebra) {
      case Algebra::so2:
      case Algebra::so3:
        if (n != (algebra == Algebra::so2 ? 2 : 3)) throw Error(ErrorCode::invalid_input, "so element has the wrong shape");
        if ((X + X.transpose()).cwiseAbs().maxCoeff() > tol) throw Error(ErrorCode::invalid_input, "so element is not skew");
        return;
      case Algebra::sl:
        if (std::abs(X.trace()) > tol * static_cast<double>(n)) throw Error(ErrorCode::invalid_input, "sl element is not trace-free");
        return;
      case Algebra::sp: {
        if (n % 2) throw Error(ErrorCode::invalid_input, "sp element needs even size");
        const Mat jx = phase::canonical_j(static_cast<std::size_t>(n / 2)) * X;
        if ((jx - jx.transpose()).cwiseAbs().maxCoeff() > tol) throw Error(ErrorCode::invalid_input, "J X is not symmetric");
        return;
      }
    }
  }
};

inline Mat3 hat(const Vec3& w) {
  Mat3 k;
  k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return k;
}

inline Vec3 vee(const Mat3& k) { return Vec3(k(2, 1), k(0, 2), k(1, 0)); }

/// Rodrigues exponential for so2 / so3.
inline Mat lie_exp(const LieAlgebraElement& e) {
  e.validate();
  if (e.algebra == Algebra::so2) {
    const double th = e.X(1, 0);
    Mat r(2, 2);
    r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    return r;
  }
  if (e.algebra != Algebra::so3) throw Error(ErrorCode::invalid_input, "exp implemented for so2 and so3 only");
  const Mat3 k = e.X;
  const double th = vee(k).norm();
  double a, b;  // sin(th)/th, (1 - cos(th))/th^2
  if (th < 1e-4) {
    const double t2 = th * th;
    a = 1 - t2 / 6 + t2 * t2 / 120;
    b = 0.5 - t2 / 24 + t2 * t2 / 720;
  } else {
    a = std::sin(th) / th;
    b = (1 - std::cos(th)) / (th * th);
  }
  return Mat(Mat3::Identity() + a * k + b * k * k);
}

inline LieAlgebraElement lie_log(const Mat& r) {
  const Eigen::Index n = r.rows();
  if (r.cols() != n || (n != 2 && n != 3)) throw Error(ErrorCode::invalid_input, "log implemented for SO(2) and SO(3)");
  if (!r.allFinite() || (r.transpose() * r - Mat::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(r.determinant() - 1) > 1e-9)
    throw Error(ErrorCode::invalid_input, "matrix is not a rotation");
  if (!(r.trace() > -(n == 2 ? 2.0 : 1.0) + 1e-9))
    throw Error(ErrorCode::ambiguous_axis, "rotation angle is too close to pi");
  if (n == 2) {
    const double th = std::atan2(r(1, 0) - r(0, 1), r(0, 0) + r(1, 1));
    Mat x(2, 2);
    x << 0, -th, th, 0;
    return LieAlgebraElement::make(Algebra::so2, x);
  }
  const Mat3 skew = 0.5 * (r - r.transpose());
  const double s = vee(skew).norm();
  const double c = 0.5 * (r.trace() - 1);
  const double th = std::atan2(s, c);
  const double factor = s < 1e-8 ? 1 + th * th / 6 : th / s;
  Mat x = factor * skew;
  x = 0.5 * (x - x.transpose());  // exact skew
  return LieAlgebraElement::make(Algebra::so3, x);
}

/// Frobenius-orthogonal projection onto the algebra.
inline LieAlgebraElement project(Algebra a, const Mat& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw Error(ErrorCode::invalid_input, "projection needs a square matrix");
  const Eigen::Index n = m.rows();
  switch (a) {
    case Algebra::so2:
    case Algebra::so3:
      if (n != (a == Algebra::so2 ? 2 : 3)) throw Error(ErrorCode::invalid_input, "so projection has the wrong shape");
      return LieAlgebraElement::make(a, 0.5 * (m - m.transpose()));
    case Algebra::sl: {
      Mat x = m - (m.trace() / static_cast<double>(n)) * Mat::Identity(n, n);
      return LieAlgebraElement::make(a, x);
    }
    case Algebra::sp: {
      if (n % 2) throw Error(ErrorCode::invalid_input, "sp projection needs even size");
      const Mat j = phase::canonical_j(static_cast<std::size_t>(n / 2));
      const Mat jm = j * m;
      // J^{-1} = -J
      return LieAlgebraElement::make(a, -j * (0.5 * (jm + jm.transpose())));
    }
  }
  throw Error(ErrorCode::invalid_input, "unknown algebra");
}

}  // namespace kineflow::moment
