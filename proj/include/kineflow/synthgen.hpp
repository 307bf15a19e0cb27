#pragma once

// Synthetic ground truth: pinhole projection of rigidly translating point
// bodies, yielding flow fields with known labels, vanishing points and
// centroids.
//
// Convention: world-to-camera X_c = R X + t, image x = f (X_c1, X_c2) / X_c3 + pp.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "kineflow/error.hpp"
#include "kineflow/flow_analysis.hpp"
#include "kineflow/numerics.hpp"
#include "kineflow/random.hpp"

namespace kineflow::synth {

struct CameraPose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double f = 500.0;
  Vec2 pp = Vec2(320.0, 240.0);

  void validate() const {
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-12 || std::abs(R.determinant() - 1.0) > 1e-12)
      throw Error(ErrorCode::invalid_input, "camera rotation is not a proper rotation");
    if (!(f > 0) || !t.allFinite() || !pp.allFinite()) throw Error(ErrorCode::invalid_input, "invalid camera intrinsics");
  }
};

inline Vec3 to_camera(const CameraPose& pose, const Vec3& X) { return pose.R * X + pose.t; }

inline Vec2 project(const CameraPose& pose, const Vec3& X) {
  const Vec3 xc = to_camera(pose, X);
  if (!(xc.z() > 1e-6)) throw Error(ErrorCode::cheirality, "point is behind the camera");
  return pose.f * Vec2(xc.x() / xc.z(), xc.y() / xc.z()) + pose.pp;
}

struct SceneBody {
  std::vector<Vec3> points;        ///< positions at frame 0 (scene units)
  Vec3 velocity = Vec3::Zero();    ///< units/frame
  int label = 0;

  void validate() const {
    if (points.size() < 4) throw Error(ErrorCode::invalid_input, "scene body needs >= 4 points");
    for (const auto& p : points)
      if (!p.allFinite()) throw Error(ErrorCode::invalid_input, "scene body has non-finite point");
    if (!velocity.allFinite()) throw Error(ErrorCode::invalid_input, "scene body has non-finite velocity");
  }
};

using PosePath = std::function<CameraPose(int frame)>;

inline PosePath static_camera(CameraPose pose) {
  return [pose](int) { return pose; };
}

/// Camera translating with constant world velocity (camera centre moves by
/// `velocity` per frame, orientation fixed).
inline PosePath translating_camera(CameraPose pose, Vec3 velocity) {
  return [pose, velocity](int k) {
    CameraPose p = pose;
    p.t = pose.t - pose.R * (static_cast<double>(k) * velocity);
    return p;
  };
}

struct VanishingTruth {
  bool finite = true;
  Vec2 point = Vec2::Zero();
  double theta = 0.0;  ///< direction in [0, pi) when not finite
};

struct GroundTruth {
  std::vector<int> body_labels;                      ///< label of body b
  std::vector<std::vector<int>> labels;              ///< [frame][sample]
  std::vector<std::vector<VanishingTruth>> vps;      ///< [frame][body]
  std::vector<std::vector<Vec2>> centroids;          ///< [frame][body], projected 3D centroid
};

struct Sequence {
  std::vector<flow::FlowField> frames;
  GroundTruth truth;
};

/// Vanishing point of the camera-frame displacement direction d.
inline VanishingTruth vanishing_of(const CameraPose& pose, const Vec3& d) {
  VanishingTruth vt;
  if (std::abs(d.z()) <= 1e-12 * d.norm()) {
    vt.finite = false;
    vt.theta = flow::axial_angle(std::atan2(d.y(), d.x()));
  } else {
    vt.point = pose.f * Vec2(d.x() / d.z(), d.y() / d.z()) + pose.pp;
  }
  return vt;
}

/// Two-frame flow: x = project(X at t), v = project(X at t + 1) - x.
inline Sequence generate_sequence(const std::vector<SceneBody>& bodies, const PosePath& path, int frames) {
  if (frames < 1) throw Error(ErrorCode::invalid_input, "need at least one frame");
  for (const auto& b : bodies) b.validate();
  Sequence seq;
  for (const auto& b : bodies) seq.truth.body_labels.push_back(b.label);
  for (int k = 0; k < frames; ++k) {
    const CameraPose now = path(k);
    const CameraPose next = path(k + 1);
    now.validate();
    next.validate();
    flow::FlowField field;
    field.t = k;
    std::vector<int> labels;
    std::vector<VanishingTruth> vps;
    std::vector<Vec2> centroids;
    for (const auto& b : bodies) {
      const Vec3 shift0 = static_cast<double>(k) * b.velocity;
      const Vec3 shift1 = static_cast<double>(k + 1) * b.velocity;
      Vec3 centre = Vec3::Zero();
      try {
        for (const auto& p : b.points) {
          const Vec2 x0 = project(now, p + shift0);
          const Vec2 x1 = project(next, p + shift1);
          field.samples.push_back({x0, x1 - x0, 1.0});
          labels.push_back(b.label);
          centre += p + shift0;
        }
        centre /= static_cast<double>(b.points.size());
        centroids.push_back(project(now, centre));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::cheirality) throw;
        throw Error(ErrorCode::partial_sequence, "body " + std::to_string(b.label) + " leaves visibility at frame " + std::to_string(k),
                    k);
      }
      const Vec3 d = to_camera(next, centre + b.velocity) - to_camera(now, centre);
      vps.push_back(vanishing_of(now, d));
    }
    seq.frames.push_back(std::move(field));
    seq.truth.labels.push_back(std::move(labels));
    seq.truth.vps.push_back(std::move(vps));
    seq.truth.centroids.push_back(std::move(centroids));
  }
  return seq;
}

/// Adds isotropic Gaussian noise to velocities only; stream keyed on (seed, frame).
inline flow::FlowField add_noise(const flow::FlowField& field, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw Error(ErrorCode::invalid_input, "noise sigma must be >= 0");
  flow::FlowField out = field;
  if (sigma == 0) return out;
  CounterRng rng(CounterRng::mix(seed, static_cast<std::uint64_t>(field.t)));
  for (auto& s : out.samples) {
    const double nx = rng.normal();
    const double ny = rng.normal();
    s.v += sigma * Vec2(nx, ny);
  }
  return out;
}

/// Points uniformly distributed in an axis-aligned box.
inline std::vector<Vec3> box_points(const Vec3& centre, const Vec3& size, int count, CounterRng& rng) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = centre[a] + size[a] * (rng.uniform() - 0.5);
    pts.push_back(p);
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Built-in scenarios.

struct Scenario {
  std::string name;
  std::vector<SceneBody> bodies;
  PosePath path;
  CameraPose camera;
  int frames = 10;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

inline Sequence render(const Scenario& sc) {
  Sequence seq = generate_sequence(sc.bodies, sc.path, sc.frames);
  for (auto& f : seq.frames) f = add_noise(f, sc.noise, sc.seed);
  return seq;
}

/// Static point cloud, camera dollying forward along its optical axis:
/// a source pencil at the principal point.
inline Scenario forward_dolly(int frames = 10, int samples = 200, double noise = 0.0, std::uint64_t seed = 0) {
  Scenario sc;
  sc.name = "forward-dolly";
  sc.frames = frames;
  sc.noise = noise;
  sc.seed = seed;
  CounterRng rng(seed);
  SceneBody cloud;
  cloud.label = 0;
  cloud.points = box_points(Vec3(0, 0, 15), Vec3(8, 6, 10), samples, rng);
  sc.bodies.push_back(std::move(cloud));
  sc.path = translating_camera(sc.camera, Vec3(0, 0, 0.5));
  return sc;
}

/// Two boxes on either side of the image approaching the camera with
/// opposite lateral velocities; their image speeds differ by
/// `separation` px/frame at the box centres.
inline Scenario two_bodies(int frames = 10, double separation = 1.0, int per_body = 100, double noise = 0.0,
                           std::uint64_t seed = 0) {
  Scenario sc;
  sc.name = "two-bodies";
  sc.frames = frames;
  sc.noise = noise;
  sc.seed = seed;
  CounterRng rng(seed);
  const double depth = 15.0;
  const double lateral = 0.5 * separation * depth / sc.camera.f;
  SceneBody a, b;
  a.label = 0;
  b.label = 1;
  a.points = box_points(Vec3(-3, 0, depth), Vec3(2, 2, 2), per_body, rng);
  b.points = box_points(Vec3(3, 0, depth), Vec3(2, 2, 2), per_body, rng);
  a.velocity = Vec3(lateral, 0, -0.02);
  b.velocity = Vec3(-lateral, 0, -0.02);
  sc.bodies = {a, b};
  sc.path = static_camera(sc.camera);
  return sc;
}

/// One body translating parallel to the image plane: a parallel pencil.
inline Scenario parallel_pan(int frames = 10, int samples = 100, double noise = 0.0, std::uint64_t seed = 0) {
  Scenario sc;
  sc.name = "parallel-pan";
  sc.frames = frames;
  sc.noise = noise;
  sc.seed = seed;
  CounterRng rng(seed);
  SceneBody body;
  body.label = 0;
  body.points = box_points(Vec3(0, 0, 12), Vec3(6, 4, 4), samples, rng);
  body.velocity = Vec3(0.1, 0.05, 0.0);
  sc.bodies.push_back(std::move(body));
  sc.path = static_camera(sc.camera);
  return sc;
}

}  // namespace kineflow::synth
