#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "kineflow/error.hpp"

namespace kineflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

using ScalarFn = std::function<double(const Vec&)>;
using VectorFn = std::function<Vec(const Vec&)>;

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

/// Scalar 2D wedge (z-component of the 3D cross product).
inline double wedge2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Pairwise (cascade) summation; order depends only on the input length.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

namespace numdiff {

/// Central-difference gradient with a caller-supplied step.
inline Vec gradient(const ScalarFn& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    xp[i] = xi + h;
    const double fp = f(xp);
    xp[i] = xi - h;
    const double fm = f(xp);
    xp[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central-difference Jacobian: column j is d f / d x_j.
inline Mat jacobian(const VectorFn& f, const Vec& x, double h) {
  Vec xp = x;
  Mat out;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    xp[j] = xj + h;
    const Vec fp = f(xp);
    xp[j] = xj - h;
    const Vec fm = f(xp);
    xp[j] = xj;
    if (j == 0) out.resize(fp.size(), x.size());
    out.col(j) = (fp - fm) / (2.0 * h);
  }
  return out;
}

}  // namespace numdiff

/// Result of a symmetric eigen decomposition, eigenvalues sorted descending
/// with eigenvectors as matching columns.
struct SymmetricEigen {
  Vec values;
  Mat vectors;
};

/// Cyclic Jacobi rotations for small symmetric matrices. Deterministic:
/// sweep order is fixed and ties in the final sort keep the original order.
inline SymmetricEigen jacobi_eigen(const Mat& input, int max_sweeps = 100) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw Error(ErrorCode::invalid_input, "jacobi_eigen needs a square matrix");
  Mat a = 0.5 * (input + input.transpose());
  Mat v = Mat::Identity(n, n);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-300 || off <= (1e-34) * a.squaredNorm()) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index l, Eigen::Index r) { return a(l, l) > a(r, r); });
  SymmetricEigen out{Vec(n), Mat(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace kineflow
