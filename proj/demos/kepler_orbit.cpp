// An agent orbiting a single attracting vanishing-point charge. Prints the
// energy drift and radius excursion for both integrators.

#include <cstdio>

#include "kineflow/vp_dynamics.hpp"

int main() {
  using namespace kineflow;
  vp::ChargeSystem s;
  s.centers = {{Vec2::Zero(), 1.0, 1}};
  const phase::PhasePoint z0(Vec(Vec2(1, 0)), Vec(Vec2(0, 1)));

  for (const auto method : {phase::Method::leapfrog, phase::Method::implicit_midpoint}) {
    const auto r = vp::simulate(s, z0, 1e-3, 20000, method);
    double excursion = 0.0;
    for (const auto& z : r.trajectory.states) excursion = std::max(excursion, std::abs(z.q.norm() - 1.0));
    std::printf("%-18s H0 = %.6f  drift = %.3e  radius excursion = %.3e\n", phase::to_string(method), r.energy.front(),
                r.energy_drift, excursion);
  }

  // A triangle of vanishing points with orthocenter-derived masses.
  const auto tri = vp::triangle_system(Vec2(-3, -1), Vec2(4, -2), Vec2(0.5, 3), {1, 1, 1}, 0.05);
  for (std::size_t j = 0; j < tri.centers.size(); ++j)
    std::printf("vertex %zu mass %.6f\n", j + 1, tri.centers[j].mass);
  const auto r = vp::simulate(tri, phase::PhasePoint(Vec(Vec2(0.2, 0.1)), Vec(Vec2(0.3, -0.1))), 1e-3, 5000);
  std::printf("triangle: drift = %.3e  min distance = %.3f  warnings = %zu\n", r.energy_drift, r.min_distance,
              r.warnings.size());
}
