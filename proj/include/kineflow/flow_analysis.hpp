#pragma once

// Sparse image-flow analysis: affine fits and first-order invariants,
// pencil / vanishing-point estimation, kinematic clustering in (x, v),
// convex-hull regions with Newtonian invariants, and centroid tracking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kineflow/error.hpp"
#include "kineflow/numerics.hpp"
#include "kineflow/phase_space.hpp"
#include "kineflow/random.hpp"

namespace kineflow::flow {

struct FlowSample {
  Vec2 x = Vec2::Zero();  ///< position (px)
  Vec2 v = Vec2::Zero();  ///< displacement (px/frame)
  double w = 1.0;
};

struct FlowField {
  int t = 0;
  std::vector<FlowSample> samples;

  /// Finite entries, nonnegative weights, positions unique within 1e-9.
  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (!s.x.allFinite() || !s.v.allFinite() || !std::isfinite(s.w))
        throw Error(ErrorCode::invalid_input, "sample has non-finite entries", static_cast<long>(i));
      if (s.w < 0) throw Error(ErrorCode::invalid_input, "sample weight is negative", static_cast<long>(i));
    }
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return samples[a].x.x() < samples[b].x.x(); });
    for (std::size_t i = 0; i < order.size(); ++i)
      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const auto& a = samples[order[i]].x;
        const auto& b = samples[order[j]].x;
        if (b.x() - a.x() > 1e-9) break;
        if (std::abs(b.y() - a.y()) <= 1e-9)
          throw Error(ErrorCode::invalid_input, "duplicate sample position", static_cast<long>(order[j]));
      }
  }
};

// ---------------------------------------------------------------------------
// Affine fit and first-order invariants.

struct AffineFit {
  Mat2 A = Mat2::Zero();
  Vec2 b = Vec2::Zero();
  double rms = 0.0;

  Vec2 operator()(const Vec2& x) const { return A * x + b; }
};

/// Weighted least squares v ~ A x + b over the given samples.
inline AffineFit fit_affine_field(std::span<const FlowSample> samples) {
  double wsum = 0.0;
  Vec2 xm = Vec2::Zero(), vm = Vec2::Zero();
  for (const auto& s : samples) {
    wsum += s.w;
    xm += s.w * s.x;
    vm += s.w * s.v;
  }
  if (samples.size() < 3 || !(wsum > 0)) throw Error(ErrorCode::rank_deficient, "affine fit needs >= 3 weighted samples");
  xm /= wsum;
  vm /= wsum;
  Mat2 cov = Mat2::Zero(), cross = Mat2::Zero();
  for (const auto& s : samples) {
    const Vec2 d = s.x - xm;
    cov += s.w * d * d.transpose();
    cross += s.w * (s.v - vm) * d.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
  const double lmax = eig.eigenvalues()[1];
  if (!(lmax > 0) || eig.eigenvalues()[0] <= 1e-12 * lmax)
    throw Error(ErrorCode::rank_deficient, "sample positions are collinear");
  AffineFit fit;
  fit.A = cross * cov.inverse();
  fit.b = vm - fit.A * xm;
  double ss = 0.0;
  for (const auto& s : samples) ss += s.w * (s.v - fit(s.x)).squaredNorm();
  fit.rms = std::sqrt(ss / wsum);
  return fit;
}

struct FirstOrderInvariants {
  double div = 0.0;
  double curl = 0.0;
  double def_magnitude = 0.0;
  double def_angle = 0.0;  ///< 2 mu, radians
};

/// A = [[u_x, u_y], [v_x, v_y]].
inline FirstOrderInvariants first_order_invariants(const Mat2& A) {
  const double ux = A(0, 0), uy = A(0, 1), vx = A(1, 0), vy = A(1, 1);
  FirstOrderInvariants inv;
  inv.div = ux + vy;
  inv.curl = -(uy - vx);
  const double c = ux - vy;
  const double s = uy + vx;
  inv.def_magnitude = std::hypot(c, s);
  inv.def_angle = inv.def_magnitude > 0 ? std::atan2(s, c) : 0.0;
  return inv;
}

// ---------------------------------------------------------------------------
// Pencils and vanishing points.

enum class PencilKind { source, sink, saddle, parallel, rotational };

inline const char* to_string(PencilKind k) {
  switch (k) {
    case PencilKind::source: return "source";
    case PencilKind::sink: return "sink";
    case PencilKind::saddle: return "saddle";
    case PencilKind::parallel: return "parallel";
    case PencilKind::rotational: return "rotational";
  }
  return "unknown";
}

struct LinePencil {
  std::vector<std::size_t> members;
  Vec3 vp = Vec3(0, 0, 1);  ///< unit-norm homogeneous point, or (dx, dy, 0) at infinity
  PencilKind kind = PencilKind::parallel;
  double theta = 0.0;         ///< direction in [0, pi) when kind is parallel
  double fit_residual = 0.0;  ///< weighted RMS line distance (px); RMS angular deviation for parallel

  bool finite() const { return vp.z() != 0.0; }
  Vec2 point() const { return vp.head<2>() / vp.z(); }
};

/// Eigen-structure classification of a linear field. Degenerate cases with
/// one eigenvalue inside [-tol, tol] follow the sign of the other.
inline PencilKind classify_pencil(const Mat2& A, double tol = 1e-9) {
  if (A.norm() <= tol) return PencilKind::parallel;
  const double tr = A.trace();
  const double det = A.determinant();
  const double disc = 0.25 * tr * tr - det;
  // Repeated real eigenvalues (A = c I) land on disc = 0 only up to rounding.
  if (disc < -tol * (0.25 * tr * tr + std::abs(det))) return PencilKind::rotational;
  const double root = std::sqrt(std::max(0.0, disc));
  const double l1 = 0.5 * tr + root;
  const double l2 = 0.5 * tr - root;
  if (l1 > tol && l2 < -tol) return PencilKind::saddle;
  if (l1 > tol) return PencilKind::source;
  if (l2 < -tol) return PencilKind::sink;
  return PencilKind::parallel;
}

struct PencilOptions {
  double speed_floor = 1e-3;           ///< px/frame
  double condition_threshold = 1e6;    ///< normal-matrix condition for the parallel switch
  double classify_tolerance = 1e-9;
};

inline double axial_angle(double angle) {
  double a = std::fmod(angle, std::numbers::pi);
  if (a < 0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a = 0.0;
  return a;
}

/// Least-squares common point of the lines (x_i, v_i); switches to a
/// parallel pencil when the normal matrix is ill-conditioned.
inline LinePencil estimate_vanishing_point(std::span<const FlowSample> samples, const PencilOptions& opts = {}) {
  LinePencil pencil;
  Mat2 normal = Mat2::Zero();
  Vec2 rhs = Vec2::Zero();
  double c2 = 0.0, s2 = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const double speed = s.v.norm();
    if (speed <= opts.speed_floor || s.w <= 0) continue;
    pencil.members.push_back(i);
    const Vec2 n = Vec2(-s.v.y(), s.v.x()) / speed;
    const Mat2 nn = n * n.transpose();
    normal += s.w * nn;
    rhs += s.w * nn * s.x;
    const double phi = std::atan2(s.v.y(), s.v.x());
    c2 += s.w * std::cos(2 * phi);
    s2 += s.w * std::sin(2 * phi);
    wsum += s.w;
  }
  if (pencil.members.empty()) throw Error(ErrorCode::no_motion, "all sample speeds are below the floor");

  const Eigen::SelfAdjointEigenSolver<Mat2> eig(normal);
  const double lmin = std::max(0.0, eig.eigenvalues()[0]);
  const double lmax = eig.eigenvalues()[1];
  const double cond = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();

  if (pencil.members.size() < 2 || !(cond <= opts.condition_threshold)) {
    pencil.kind = PencilKind::parallel;
    pencil.theta = axial_angle(0.5 * std::atan2(s2, c2));
    pencil.vp = Vec3(std::cos(pencil.theta), std::sin(pencil.theta), 0.0);
    double ss = 0.0;
    for (std::size_t i : pencil.members) {
      const auto& s = samples[i];
      const double d = std::sin(std::atan2(s.v.y(), s.v.x()) - pencil.theta);
      ss += s.w * d * d;
    }
    pencil.fit_residual = std::sqrt(ss / wsum);
    return pencil;
  }

  const Vec2 c = normal.ldlt().solve(rhs);
  pencil.vp = Vec3(c.x(), c.y(), 1.0).normalized();
  double ss = 0.0, radial = 0.0;
  std::vector<FlowSample> moving;
  moving.reserve(pencil.members.size());
  for (std::size_t i : pencil.members) {
    const auto& s = samples[i];
    const Vec2 n = Vec2(-s.v.y(), s.v.x()).normalized();
    const double d = n.dot(c - s.x);
    ss += s.w * d * d;
    radial += s.w * (s.x - c).dot(s.v);
    moving.push_back(s);
  }
  pencil.fit_residual = std::sqrt(ss / wsum);

  std::optional<PencilKind> kind;
  try {
    const AffineFit fit = fit_affine_field(moving);
    const PencilKind k = classify_pencil(fit.A, opts.classify_tolerance);
    if (k != PencilKind::parallel) kind = k;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::rank_deficient) throw;
  }
  // Too few (or collinear) samples for an affine fit: use the sign of the
  // radial flow about the fitted point.
  pencil.kind = kind ? *kind : (radial >= 0 ? PencilKind::source : PencilKind::sink);
  return pencil;
}

// ---------------------------------------------------------------------------
// Kinematic clustering.

struct ClusterOptions {
  std::uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance = 1e-6;
  double speed_floor = 1e-3;
  /// Samples slower than the floor form the background (label -1) and
  /// are excluded from K-means.
  bool separate_background = true;
};

struct Cluster {
  std::vector<std::size_t> members;
  Vec2 center_x = Vec2::Zero();  ///< weighted mean position (px)
  Vec2 center_v = Vec2::Zero();  ///< weighted mean velocity (px/frame)
};

struct ClusterResult {
  std::vector<int> labels;  ///< per sample; -1 marks background
  std::vector<Cluster> clusters;
  std::vector<std::size_t> background;
  double wcss = 0.0;  ///< in normalized (x / sigma_x, v / sigma_v) units
  int iterations = 0;
  double sigma_x = 1.0;
  double sigma_v = 1.0;
};

namespace detail {

using Vec4 = Eigen::Vector4d;

inline double pooled_sigma(const std::vector<Vec2>& xs, const std::vector<double>& ws) {
  double wsum = 0.0;
  Vec2 mean = Vec2::Zero();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    wsum += ws[i];
    mean += ws[i] * xs[i];
  }
  if (!(wsum > 0)) return 1.0;
  mean /= wsum;
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) ss += ws[i] * (xs[i] - mean).squaredNorm();
  const double sigma = std::sqrt(ss / (2.0 * wsum));
  return sigma > 0 ? sigma : 1.0;
}

}  // namespace detail

/// Lloyd's K-means on (x / sigma_x, v / sigma_v) with k-means++ seeding from a
/// counter-based generator. Ties go to the lowest index.
inline ClusterResult kinematic_cluster(const FlowField& field, int k, const ClusterOptions& opts = {}) {
  using detail::Vec4;
  ClusterResult result;
  result.labels.assign(field.samples.size(), -1);

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < field.samples.size(); ++i) {
    if (opts.separate_background && field.samples[i].v.norm() < opts.speed_floor)
      result.background.push_back(i);
    else
      active.push_back(i);
  }
  if (k < 1 || static_cast<std::size_t>(k) > active.size())
    throw Error(ErrorCode::invalid_k, "k = " + std::to_string(k) + " with " + std::to_string(active.size()) + " samples");

  std::vector<Vec2> xs, vs;
  std::vector<double> ws;
  for (std::size_t i : active) {
    xs.push_back(field.samples[i].x);
    vs.push_back(field.samples[i].v);
    ws.push_back(field.samples[i].w);
  }
  result.sigma_x = detail::pooled_sigma(xs, ws);
  result.sigma_v = detail::pooled_sigma(vs, ws);
  const std::size_t n = active.size();
  std::vector<Vec4> feats(n);
  for (std::size_t i = 0; i < n; ++i) {
    feats[i] << xs[i] / result.sigma_x, vs[i] / result.sigma_v;
  }

  // k-means++ seeding.
  CounterRng rng(opts.seed);
  std::vector<Vec4> centers;
  centers.push_back(feats[rng.below(n)]);
  std::vector<double> d2(n);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (feats[i] - c).squaredNorm());
      d2[i] = ws[i] * best;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(feats[pick]);
  }

  std::vector<int> assign(n, 0);
  for (int it = 0; it < opts.max_iterations; ++it) {
    result.iterations = it + 1;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bestd = (feats[i] - centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (feats[i] - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (d < bestd) {
          bestd = d;
          best = c;
        }
      }
      assign[i] = best;
    }
    double motion = 0.0;
    for (int c = 0; c < k; ++c) {
      Vec4 sum = Vec4::Zero();
      double wsum = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (assign[i] == c) {
          sum += ws[i] * feats[i];
          wsum += ws[i];
        }
      if (wsum > 0) {
        const Vec4 next = sum / wsum;
        motion = std::max(motion, (next - centers[static_cast<std::size_t>(c)]).norm());
        centers[static_cast<std::size_t>(c)] = next;
      }
    }
    if (motion < opts.tolerance) break;
  }

  result.clusters.resize(static_cast<std::size_t>(k));
  std::vector<double> csum(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(assign[i]);
    result.labels[active[i]] = assign[i];
    auto& cl = result.clusters[c];
    cl.members.push_back(active[i]);
    cl.center_x += ws[i] * xs[i];
    cl.center_v += ws[i] * vs[i];
    csum[c] += ws[i];
    result.wcss += ws[i] * (feats[i] - centers[c]).squaredNorm();
  }
  for (std::size_t c = 0; c < result.clusters.size(); ++c)
    if (csum[c] > 0) {
      result.clusters[c].center_x /= csum[c];
      result.clusters[c].center_v /= csum[c];
    }
  return result;
}

/// WCSS for k = 1..k_max (stops early when k exceeds the sample count).
inline std::vector<double> elbow_scan(const FlowField& field, int k_max = 8, const ClusterOptions& opts = {}) {
  std::vector<double> out;
  for (int k = 1; k <= k_max; ++k) {
    try {
      out.push_back(kinematic_cluster(field, k, opts).wcss);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::invalid_k) throw;
      break;
    }
  }
  return out;
}

namespace detail {

inline std::vector<FlowSample> gather(const FlowField& field, std::span<const std::size_t> members) {
  std::vector<FlowSample> out;
  out.reserve(members.size());
  for (std::size_t i : members) {
    if (i >= field.samples.size()) throw Error(ErrorCode::invalid_input, "member index out of range", static_cast<long>(i));
    out.push_back(field.samples[i]);
  }
  return out;
}

}  // namespace detail

/// Iteratively drops the worst sample while its residual against the
/// cluster's affine fit exceeds nsigma * rms; never goes below 3 members.
inline std::vector<std::size_t> remove_outliers(std::span<const std::size_t> members, const FlowField& field,
                                                double nsigma, double absolute_floor = 1e-9) {
  std::vector<std::size_t> kept(members.begin(), members.end());
  while (kept.size() > 3) {
    AffineFit fit;
    try {
      fit = fit_affine_field(detail::gather(field, kept));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::rank_deficient) break;
      throw;
    }
    std::size_t worst = 0;
    double worst_r = -1.0;
    for (std::size_t j = 0; j < kept.size(); ++j) {
      const auto& s = field.samples[kept[j]];
      const double r = (s.v - fit(s.x)).norm();
      if (r > worst_r) {
        worst_r = r;
        worst = j;
      }
    }
    if (!(worst_r > nsigma * fit.rms) || worst_r <= absolute_floor) break;
    kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Regions.

/// Counter-clockwise convex hull (Andrew's monotone chain), collinear points dropped.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  const auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) { return wedge2(a - o, b - o); };
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

/// Signed shoelace area (positive for counter-clockwise).
inline double polygon_area(std::span<const Vec2> poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += wedge2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

inline Vec2 polygon_centroid(std::span<const Vec2> poly) {
  // Relative to the first vertex for conditioning.
  const Vec2 o = poly.front();
  Vec2 c = Vec2::Zero();
  double a2 = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 p = poly[i] - o;
    const Vec2 q = poly[(i + 1) % poly.size()] - o;
    const double cr = wedge2(p, q);
    a2 += cr;
    c += cr * (p + q);
  }
  return o + c / (3.0 * a2);
}

struct Momenta {
  Vec2 linear = Vec2::Zero();
  double angular = 0.0;
  double kinetic_energy = 0.0;
};

/// Single source of the region invariants: w v, w (g ^ v), w |v|^2 / 2.
inline Momenta region_momenta(double w, const Vec2& g, const Vec2& v) {
  return Momenta{w * v, w * wedge2(g, v), 0.5 * w * v.squaredNorm()};
}

struct KinematicRegion {
  int id = 0;
  std::vector<std::size_t> members;
  std::vector<Vec2> hull;  ///< convex, counter-clockwise
  Vec2 centroid = Vec2::Zero();
  double area = 0.0;  ///< stored positive
  bool counter_clockwise = true;
  Vec2 velocity = Vec2::Zero();
  double weight = 0.0;  ///< ln(A_t / A_prev), zeroed below the background threshold
  Vec2 linear_momentum = Vec2::Zero();
  double angular_momentum = 0.0;
  double kinetic_energy = 0.0;
};

struct RegionOptions {
  /// |w| below this is treated as background (null weight).
  double background_threshold = 1e-9;
};

inline KinematicRegion build_region(std::span<const std::size_t> members, const FlowField& field,
                                    const KinematicRegion* prev = nullptr, const RegionOptions& opts = {}) {
  const auto samples = detail::gather(field, members);
  if (samples.size() < 3) throw Error(ErrorCode::degenerate_hull, "region needs >= 3 members");
  std::vector<Vec2> pts;
  pts.reserve(samples.size());
  double wsum = 0.0;
  Vec2 v = Vec2::Zero();
  double extent = 0.0;
  for (const auto& s : samples) {
    pts.push_back(s.x);
    wsum += s.w;
    v += s.w * s.v;
    extent = std::max(extent, (s.x - samples.front().x).norm());
  }
  KinematicRegion r;
  r.members.assign(members.begin(), members.end());
  r.hull = convex_hull(pts);
  const double area = r.hull.size() >= 3 ? polygon_area(r.hull) : 0.0;
  if (!(area > 1e-12 * std::max(1.0, extent * extent)))
    throw Error(ErrorCode::degenerate_hull, "member positions are collinear");
  r.area = area;
  r.counter_clockwise = true;
  r.centroid = polygon_centroid(r.hull);
  r.velocity = wsum > 0 ? Vec2(v / wsum) : Vec2::Zero();
  if (prev) {
    if (!(prev->area > 0)) throw Error(ErrorCode::invalid_input, "previous region has no area");
    r.weight = std::log(r.area / prev->area);
    if (std::abs(r.weight) < opts.background_threshold) r.weight = 0.0;
  }
  const Momenta m = region_momenta(r.weight, r.centroid, r.velocity);
  r.linear_momentum = m.linear;
  r.angular_momentum = m.angular;
  r.kinetic_energy = m.kinetic_energy;
  return r;
}

/// Nearest-centroid match among candidates with area ratio in [1/2, 2].
/// Returns nullopt when nothing passes the gate; two candidates whose
/// distances differ by less than `ambiguity_px` is an error.
inline std::optional<std::size_t> match_region(const KinematicRegion& region, std::span<const KinematicRegion> candidates,
                                               double ambiguity_px = 1.0) {
  std::optional<std::size_t> best;
  double d1 = std::numeric_limits<double>::infinity(), d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double ratio = candidates[i].area / region.area;
    if (!(ratio >= 0.5 && ratio <= 2.0)) continue;
    const double d = (candidates[i].centroid - region.centroid).norm();
    if (d < d1) {
      d2 = d1;
      d1 = d;
      best = i;
    } else if (d < d2) {
      d2 = d;
    }
  }
  if (best && d2 - d1 < ambiguity_px)
    throw Error(ErrorCode::ambiguous_track, "two candidate regions within " + std::to_string(ambiguity_px) + " px",
                static_cast<long>(*best));
  return best;
}

// ---------------------------------------------------------------------------
// Energies.

inline double apparent_kinetic_energy(const FlowField& field) {
  std::vector<double> terms;
  terms.reserve(field.samples.size());
  for (const auto& s : field.samples) terms.push_back(0.5 * s.w * s.v.squaredNorm());
  return pairwise_sum(terms);
}

struct Energy {
  double potential = 0.0;
  double kinetic = 0.0;
  double total = 0.0;
};

/// E_pot = sum w_i h_i (gravitational constant dropped), E_kin = 1/2 sum w_i |v_i|^2.
inline Energy total_energy(std::span<const KinematicRegion> regions, std::span<const double> heights) {
  if (regions.size() != heights.size()) throw Error(ErrorCode::invalid_input, "regions and heights differ in length");
  std::vector<double> pot, kin;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    pot.push_back(regions[i].weight * heights[i]);
    kin.push_back(0.5 * regions[i].weight * regions[i].velocity.squaredNorm());
  }
  Energy e;
  e.potential = pairwise_sum(pot);
  e.kinetic = pairwise_sum(kin);
  e.total = e.potential + e.kinetic;
  return e;
}

/// nu = p / s_b; s_b = 0 signals a stationary background.
inline Vec3 relative_speeds(const Vec3& p, double s_b) {
  if (s_b == 0.0) throw Error(ErrorCode::division_by_zero, "background speed is zero; re-segment");
  return p / s_b;
}

// ---------------------------------------------------------------------------
// Centroid tracking with cubic interpolants.

struct Kinematics {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();
};

/// Cubic through four knots at parameters 0..3 (Newton forward form),
/// evaluated with its first and second derivatives at tau.
inline Kinematics cubic_through(const Vec2& p0, const Vec2& p1, const Vec2& p2, const Vec2& p3, double tau) {
  const Vec2 d1 = p1 - p0;
  const Vec2 d2 = p2 - 2.0 * p1 + p0;
  const Vec2 d3 = p3 - 3.0 * p2 + 3.0 * p1 - p0;
  Kinematics k;
  k.position = p0 + tau * d1 + 0.5 * tau * (tau - 1) * d2 + tau * (tau - 1) * (tau - 2) / 6.0 * d3;
  k.velocity = d1 + (tau - 0.5) * d2 + (3 * tau * tau - 6 * tau + 2) / 6.0 * d3;
  k.acceleration = d2 + (tau - 1) * d3;
  return k;
}

/// Per-knot kinematics from four-knot windows; each knot is taken as an
/// interior point of its window where possible.
inline std::vector<Kinematics> cubic_kinematics(std::span<const Vec2> knots) {
  if (knots.size() < 4) throw Error(ErrorCode::invalid_input, "cubic tracking needs >= 4 positions");
  std::vector<Kinematics> out;
  const std::size_t n = knots.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = std::min(i == 0 ? 0 : i - 1, n - 4);
    Kinematics k = cubic_through(knots[s], knots[s + 1], knots[s + 2], knots[s + 3], static_cast<double>(i - s));
    k.position = knots[i];
    out.push_back(k);
  }
  return out;
}

/// Window-midpoint kinematics: entry j evaluates the cubic through
/// knots j..j+3 at parameter 1.5.
inline std::vector<Kinematics> cubic_midpoints(std::span<const Vec2> knots) {
  if (knots.size() < 4) throw Error(ErrorCode::invalid_input, "cubic tracking needs >= 4 positions");
  std::vector<Kinematics> out;
  for (std::size_t j = 0; j + 3 < knots.size(); ++j)
    out.push_back(cubic_through(knots[j], knots[j + 1], knots[j + 2], knots[j + 3], 1.5));
  return out;
}

struct CentroidTrack {
  int first_frame = 0;
  std::vector<std::size_t> region_index;  ///< index into each successive frame
  std::vector<Kinematics> kinematics;     ///< one per frame of the track
  std::vector<Kinematics> midpoints;      ///< one per four-frame window
};

/// Links regions frame to frame (nearest centroid, area-ratio gate) and fits
/// cubic kinematics to every track spanning >= 4 frames.
inline std::vector<CentroidTrack> track_centroids(std::span<const std::vector<KinematicRegion>> frames) {
  if (frames.size() < 4) throw Error(ErrorCode::invalid_input, "tracking needs >= 4 frames");
  struct Open {
    int first;
    std::vector<std::size_t> idx;
  };
  std::vector<Open> tracks;
  std::vector<CentroidTrack> done;
  for (std::size_t i = 0; i < frames[0].size(); ++i) tracks.push_back({0, {i}});

  const auto finish = [&](const Open& t) {
    if (t.idx.size() < 4) return;
    std::vector<Vec2> knots;
    for (std::size_t j = 0; j < t.idx.size(); ++j)
      knots.push_back(frames[static_cast<std::size_t>(t.first) + j][t.idx[j]].centroid);
    done.push_back({t.first, t.idx, cubic_kinematics(knots), cubic_midpoints(knots)});
  };

  for (std::size_t f = 1; f < frames.size(); ++f) {
    std::vector<Open> next;
    std::vector<bool> claimed(frames[f].size(), false);
    for (auto& t : tracks) {
      const auto& last = frames[f - 1][t.idx.back()];
      const auto m = match_region(last, frames[f]);
      if (m && !claimed[*m]) {
        claimed[*m] = true;
        t.idx.push_back(*m);
        next.push_back(std::move(t));
      } else {
        finish(t);
      }
    }
    for (std::size_t i = 0; i < frames[f].size(); ++i)
      if (!claimed[i]) next.push_back({static_cast<int>(f), {i}});
    tracks = std::move(next);
  }
  for (const auto& t : tracks) finish(t);
  return done;
}

// ---------------------------------------------------------------------------
// Lifted intensity on phase space R^4 = (q1, q2, p1, p2).

struct LiftedGradient {
  Vec gradient;
  Vec symplectic;
  bool critical = false;
};

inline LiftedGradient lifted_intensity_gradient(const ScalarFn& g, const Vec& z, double tol = 1e-9) {
  if (z.size() != 4) throw Error(ErrorCode::invalid_dimension, "lifted intensity lives on R^4");
  LiftedGradient out;
  out.gradient = numdiff::gradient(g, z, phase::default_step(z));
  if (!out.gradient.allFinite()) throw Error(ErrorCode::numeric, "non-finite intensity gradient");
  out.symplectic = phase::apply_j(out.gradient);
  out.critical = out.symplectic.norm() <= tol;
  return out;
}

}  // namespace kineflow::flow
