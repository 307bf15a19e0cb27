#pragma once

// Pointwise exterior calculus on R^n (2 <= n <= 6). Forms are extensional:
// a degree-k form is a callable returning its C(n, k) coefficients on the
// lexicographically ordered increasing multi-indices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "kineflow/error.hpp"
#include "kineflow/numerics.hpp"

namespace kineflow::exterior {

inline constexpr int kMinDim = 2;
inline constexpr int kMaxDim = 6;

using MultiIndex = std::vector<int>;

inline std::size_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::size_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::size_t>(n - k + i) / static_cast<std::size_t>(i);
  return r;
}

namespace detail {

inline std::vector<MultiIndex> enumerate(int n, int k) {
  std::vector<MultiIndex> out;
  MultiIndex cur;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (int i = start; i < n; ++i) {
      cur.push_back(i);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

}  // namespace detail

/// Increasing multi-indices of length k over {0..n-1}, lexicographic.
/// Tables for every n <= 6 are built once (thread-safe static init).
inline const std::vector<MultiIndex>& basis(int n, int k) {
  static const auto tables = [] {
    std::vector<std::vector<std::vector<MultiIndex>>> t(kMaxDim + 1);
    for (int dim = 0; dim <= kMaxDim; ++dim)
      for (int deg = 0; deg <= dim; ++deg) t[static_cast<std::size_t>(dim)].push_back(detail::enumerate(dim, deg));
    return t;
  }();
  if (n < 0 || n > kMaxDim || k < 0 || k > n) throw Error(ErrorCode::invalid_input, "no basis for (n, k)");
  return tables[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)];
}

/// Position of an increasing multi-index in basis(n, k).
inline std::size_t index_of(int n, const MultiIndex& idx) {
  const auto& b = basis(n, static_cast<int>(idx.size()));
  const auto it = std::lower_bound(b.begin(), b.end(), idx);
  return static_cast<std::size_t>(it - b.begin());
}

inline void check_dim(int n) {
  if (n < kMinDim || n > kMaxDim)
    throw Error(ErrorCode::invalid_dimension, "form dimension must be in [2, 6], got " + std::to_string(n));
}

/// Differential form of degree k on R^n.
struct FormField {
  int n = 2;
  int k = 0;
  VectorFn coefficients;

  FormField() = default;
  FormField(int n_, int k_, VectorFn c) : n(n_), k(k_), coefficients(std::move(c)) {
    check_dim(n);
    if (k < 0 || k > n) throw Error(ErrorCode::invalid_input, "form degree out of range");
  }

  std::size_t size() const { return binomial(n, k); }

  Vec operator()(const Vec& x) const {
    if (x.size() != n) throw Error(ErrorCode::invalid_dimension, "point dimension does not match form");
    Vec c = coefficients(x);
    if (static_cast<std::size_t>(c.size()) != size())
      throw Error(ErrorCode::invalid_dimension, "coefficient array length must be C(n, k)");
    return c;
  }

  static FormField scalar(int n, ScalarFn f) {
    return FormField(n, 0, [f = std::move(f)](const Vec& x) { return Vec(Vec::Constant(1, f(x))); });
  }

  static FormField zero(int n, int k) {
    const auto len = static_cast<Eigen::Index>(binomial(n, k));
    return FormField(n, k, [len](const Vec&) { return Vec(Vec::Zero(len)); });
  }

  /// dx^{i_1} ^ ... ^ dx^{i_k} with constant coefficient 1.
  static FormField basis_form(int n, const MultiIndex& idx) {
    const int k = static_cast<int>(idx.size());
    const auto len = static_cast<Eigen::Index>(binomial(n, k));
    const auto pos = static_cast<Eigen::Index>(index_of(n, idx));
    return FormField(n, k, [len, pos](const Vec&) {
      Vec c = Vec::Zero(len);
      c[pos] = 1.0;
      return c;
    });
  }
};

struct VectorField {
  int n = 2;
  VectorFn f;

  VectorField() = default;
  VectorField(int n_, VectorFn f_) : n(n_), f(std::move(f_)) { check_dim(n); }

  Vec operator()(const Vec& x) const {
    Vec v = f(x);
    if (v.size() != n) throw Error(ErrorCode::invalid_dimension, "vector field output length must equal n");
    return v;
  }

  /// Coordinate field d/dx^i.
  static VectorField coordinate(int n, int i) {
    return VectorField(n, [n, i](const Vec&) {
      Vec v = Vec::Zero(n);
      v[i] = 1.0;
      return v;
    });
  }

  static VectorField linear(const Mat& a) {
    return VectorField(static_cast<int>(a.rows()), [a](const Vec& x) { return Vec(a * x); });
  }
};

inline double fd_step(const Vec& x) { return 1e-5 * std::max(1.0, x.cwiseAbs().maxCoeff()); }

namespace detail {

struct WedgeTerm {
  std::size_t left, right, out;
  double sign;
};

/// Shuffle-sign table for (k, l, n), built once per triple.
inline std::vector<WedgeTerm> build_wedge_table(int n, int k, int l) {
  std::vector<WedgeTerm> terms;
  const auto& bk = basis(n, k);
  const auto& bl = basis(n, l);
  for (std::size_t i = 0; i < bk.size(); ++i) {
    for (std::size_t j = 0; j < bl.size(); ++j) {
      MultiIndex merged;
      merged.reserve(static_cast<std::size_t>(k + l));
      int inversions = 0;
      bool disjoint = true;
      for (int a : bk[i])
        for (int b : bl[j]) {
          if (a == b) disjoint = false;
          if (a > b) ++inversions;
        }
      if (!disjoint) continue;
      merged.insert(merged.end(), bk[i].begin(), bk[i].end());
      merged.insert(merged.end(), bl[j].begin(), bl[j].end());
      std::sort(merged.begin(), merged.end());
      terms.push_back({i, j, index_of(n, merged), inversions % 2 ? -1.0 : 1.0});
    }
  }
  return terms;
}

inline const std::vector<WedgeTerm>& wedge_table(int n, int k, int l) {
  static const auto tables = [] {
    std::map<std::tuple<int, int, int>, std::vector<WedgeTerm>> t;
    for (int dim = kMinDim; dim <= kMaxDim; ++dim)
      for (int a = 0; a <= dim; ++a)
        for (int b = 0; a + b <= dim; ++b) t.emplace(std::make_tuple(dim, a, b), build_wedge_table(dim, a, b));
    return t;
  }();
  return tables.at(std::make_tuple(n, k, l));
}

/// For each multi-index K of length k+1 and each position r in K:
/// (coordinate K[r], index of K without K[r], (-1)^r).
struct Face {
  std::size_t out;
  int coord;
  std::size_t source;
  double sign;
};

inline std::vector<Face> build_face_table(int n, int k_plus_1) {
  std::vector<Face> faces;
  const auto& b = basis(n, k_plus_1);
  for (std::size_t o = 0; o < b.size(); ++o) {
    for (std::size_t r = 0; r < b[o].size(); ++r) {
      MultiIndex rest = b[o];
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(r));
      faces.push_back({o, b[o][r], index_of(n, rest), r % 2 ? -1.0 : 1.0});
    }
  }
  return faces;
}

inline const std::vector<Face>& face_table(int n, int k_plus_1) {
  static const auto tables = [] {
    std::map<std::pair<int, int>, std::vector<Face>> t;
    for (int dim = kMinDim; dim <= kMaxDim; ++dim)
      for (int k = 1; k <= dim; ++k) t.emplace(std::make_pair(dim, k), build_face_table(dim, k));
    return t;
  }();
  return tables.at(std::make_pair(n, k_plus_1));
}

inline void check_same_dim(int a, int b) {
  if (a != b) throw Error(ErrorCode::invalid_dimension, "operands live in different dimensions");
}

}  // namespace detail

inline FormField wedge(const FormField& a, const FormField& b) {
  detail::check_same_dim(a.n, b.n);
  if (a.k + b.k > a.n) throw Error(ErrorCode::degree_overflow, "wedge degree exceeds dimension");
  const auto& table = detail::wedge_table(a.n, a.k, b.k);
  const auto len = static_cast<Eigen::Index>(binomial(a.n, a.k + b.k));
  return FormField(a.n, a.k + b.k, [a, b, &table, len](const Vec& x) {
    const Vec ca = a(x);
    const Vec cb = b(x);
    Vec out = Vec::Zero(len);
    for (const auto& t : table)
      out[static_cast<Eigen::Index>(t.out)] +=
          t.sign * ca[static_cast<Eigen::Index>(t.left)] * cb[static_cast<Eigen::Index>(t.right)];
    return out;
  });
}

/// Exterior derivative with central-difference partials,
/// step 1e-5 * max(1, |x|_inf).
inline FormField exterior_derivative(const FormField& a) {
  if (a.k >= a.n) throw Error(ErrorCode::degree_overflow, "exterior derivative of a top-degree form");
  const auto& faces = detail::face_table(a.n, a.k + 1);
  const auto len = static_cast<Eigen::Index>(binomial(a.n, a.k + 1));
  return FormField(a.n, a.k + 1, [a, &faces, len](const Vec& x) {
    const double h = fd_step(x);
    std::vector<Vec> partials(static_cast<std::size_t>(a.n));
    Vec xp = x;
    for (int j = 0; j < a.n; ++j) {
      xp[j] = x[j] + h;
      const Vec fp = a(xp);
      xp[j] = x[j] - h;
      const Vec fm = a(xp);
      xp[j] = x[j];
      partials[static_cast<std::size_t>(j)] = (fp - fm) / (2.0 * h);
    }
    Vec out = Vec::Zero(len);
    for (const auto& f : faces)
      out[static_cast<Eigen::Index>(f.out)] +=
          f.sign * partials[static_cast<std::size_t>(f.coord)][static_cast<Eigen::Index>(f.source)];
    return out;
  });
}

/// Interior product i_X a.
inline FormField contract(const VectorField& X, const FormField& a) {
  detail::check_same_dim(X.n, a.n);
  if (a.k == 0) throw Error(ErrorCode::degree_underflow, "cannot contract a 0-form");
  // The faces of degree-k indices enumerate every (K, r) with K \ K[r] = I.
  const auto& faces = detail::face_table(a.n, a.k);
  const auto len = static_cast<Eigen::Index>(binomial(a.n, a.k - 1));
  return FormField(a.n, a.k - 1, [X, a, &faces, len](const Vec& x) {
    const Vec v = X(x);
    const Vec c = a(x);
    Vec out = Vec::Zero(len);
    for (const auto& f : faces)
      out[static_cast<Eigen::Index>(f.source)] += f.sign * v[f.coord] * c[static_cast<Eigen::Index>(f.out)];
    return out;
  });
}

inline FormField add(const FormField& a, const FormField& b) {
  detail::check_same_dim(a.n, b.n);
  if (a.k != b.k) throw Error(ErrorCode::invalid_input, "cannot add forms of different degree");
  return FormField(a.n, a.k, [a, b](const Vec& x) { return Vec(a(x) + b(x)); });
}

inline FormField scale(const ScalarFn& f, const FormField& a) {
  return FormField(a.n, a.k, [f, a](const Vec& x) { return Vec(f(x) * a(x)); });
}

/// Cartan's formula L_X = i_X d + d i_X.
inline FormField lie_derivative_cartan(const VectorField& X, const FormField& a) {
  detail::check_same_dim(X.n, a.n);
  if (a.k == 0) return contract(X, exterior_derivative(a));
  if (a.k == a.n) return exterior_derivative(contract(X, a));
  return add(contract(X, exterior_derivative(a)), exterior_derivative(contract(X, a)));
}

/// Time-t flow of X by classical RK4 with fixed substeps.
inline Vec flow(const VectorField& X, const Vec& x0, double t, int substeps = 8) {
  const double h = t / substeps;
  Vec x = x0;
  for (int s = 0; s < substeps; ++s) {
    const Vec k1 = X(x);
    const Vec k2 = X(x + 0.5 * h * k1);
    const Vec k3 = X(x + 0.5 * h * k2);
    const Vec k4 = X(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  if (!x.allFinite()) throw Error(ErrorCode::numeric, "flow integration produced non-finite state");
  return x;
}

/// Flow map together with its Jacobian, integrating the variational
/// equation dM/dt = DX(x(t)) M alongside the state.
inline std::pair<Vec, Mat> flow_with_jacobian(const VectorField& X, const Vec& x0, double t, int substeps = 8) {
  const double h = t / substeps;
  const auto dfield = [&](const Vec& x) {
    return numdiff::jacobian([&](const Vec& y) { return X(y); }, x, fd_step(x));
  };
  Vec x = x0;
  Mat m = Mat::Identity(x0.size(), x0.size());
  for (int s = 0; s < substeps; ++s) {
    const Vec k1 = X(x);
    const Mat m1 = dfield(x) * m;
    const Vec xa = x + 0.5 * h * k1;
    const Vec k2 = X(xa);
    const Mat m2 = dfield(xa) * (m + 0.5 * h * m1);
    const Vec xb = x + 0.5 * h * k2;
    const Vec k3 = X(xb);
    const Mat m3 = dfield(xb) * (m + 0.5 * h * m2);
    const Vec xc = x + h * k3;
    const Vec k4 = X(xc);
    const Mat m4 = dfield(xc) * (m + h * m3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    m += (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
  }
  if (!x.allFinite() || !m.allFinite()) throw Error(ErrorCode::numeric, "flow integration produced non-finite state");
  return {x, m};
}

/// (phi_t^* a - a) / t, with phi_t the flow of X and the pullback taken
/// through k x k minors of the flow Jacobian.
inline FormField lie_derivative_flow(const VectorField& X, const FormField& a, double t) {
  detail::check_same_dim(X.n, a.n);
  if (!(std::abs(t) >= 1e-6 && std::abs(t) <= 1e-2))
    throw Error(ErrorCode::invalid_input, "flow step |t| must lie in [1e-6, 1e-2]");
  const auto& b = basis(a.n, a.k);
  return FormField(a.n, a.k, [X, a, t, &b](const Vec& x) {
    const Vec here = a(x);
    if (a.k == 0) return Vec((a(flow(X, x, t)) - here) / t);
    const auto [moved, dphi] = flow_with_jacobian(X, x, t);
    const Vec there = a(moved);
    Vec pulled = Vec::Zero(static_cast<Eigen::Index>(b.size()));
    Mat minor(a.k, a.k);
    for (std::size_t i = 0; i < b.size(); ++i) {
      for (std::size_t j = 0; j < b.size(); ++j) {
        for (int r = 0; r < a.k; ++r)
          for (int c = 0; c < a.k; ++c)
            minor(r, c) = dphi(b[j][static_cast<std::size_t>(r)], b[i][static_cast<std::size_t>(c)]);
        pulled[static_cast<Eigen::Index>(i)] += there[static_cast<Eigen::Index>(j)] * minor.determinant();
      }
    }
    return Vec((pulled - here) / t);
  });
}

/// [X, Y] = DY X - DX Y with central-difference Jacobians.
inline VectorField lie_bracket(const VectorField& X, const VectorField& Y) {
  detail::check_same_dim(X.n, Y.n);
  return VectorField(X.n, [X, Y](const Vec& x) {
    const double h = fd_step(x);
    const Mat dx = numdiff::jacobian([&](const Vec& y) { return X(y); }, x, h);
    const Mat dy = numdiff::jacobian([&](const Vec& y) { return Y(y); }, x, h);
    return Vec(dy * X(x) - dx * Y(x));
  });
}

}  // namespace kineflow::exterior
