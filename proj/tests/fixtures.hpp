#pragma once

#include <cmath>

#include "patchsim/stepper.hpp"

namespace patchsim::fixtures {

inline ConvexBody ground_body() {
  ConvexBody b;
  b.surfaces = {HalfSpace{{0, 0, 1}, 0.0}};
  b.environment = true;
  return b;
}

/// One table leg: a capped cylinder in the body frame, feet at z = -0.3.
inline ConvexBody table_leg(double cx, double cy, double radius = 0.1) {
  ConvexBody b;
  b.surfaces = {InfiniteCylinder{{cx, cy, 0}, {0, 0, 1}, radius}, SlabCap{{0, 0, 1}, -0.3, false},
                SlabCap{{0, 0, 1}, 0.0, true}};
  return b;
}

/// Three-legged table on a flat floor.  Leg 0 and 1 trail at 210/330 degrees,
/// leg 2 leads on the +y axis; leg axis circle radius 0.3, COM height 0.3.
inline SimulationInput table_input() {
  SimulationInput in;
  in.params.mass = 5.0;
  in.params.inertia_cm = 5.0 * Mat3::Identity();
  in.frame = ContactFrame{};

  const double c30 = std::sqrt(3.0) / 2.0;
  const double leg_xy[3][2] = {{-0.3 * c30, -0.15}, {0.3 * c30, -0.15}, {0.0, 0.3}};
  const FrictionParams friction{1.0, 1.0, 1.0, 0.12};
  for (const auto& xy : leg_xy) {
    in.patches.push_back(ContactPatch{table_leg(xy[0], xy[1]), ground_body(), friction});
  }

  in.initial_state.position = Vec3(0, 0, 0.3);
  in.gravity = 9.8;
  in.h = 0.01;
  in.solver.tolerance = 1e-11;  // impulse sums divide residuals by h
  return in;
}

/// Sliding table (pure translation reference case).
inline SimulationInput example1_input(int steps = 100) {
  SimulationInput in = table_input();
  in.initial_state.linear_velocity = Vec3(4, 3, 0);
  in.steps = steps;
  return in;
}

/// Sliding table that gets an angular impulse of -5 N·m·s about x at t ≈ 0.75 s
/// (a one-step moment), tilts onto the leading leg, and rocks back.
inline SimulationInput example2_input(int steps = 250) {
  SimulationInput in = table_input();
  in.initial_state.linear_velocity = Vec3(0, 1, 0);
  AppliedWrench kick;
  kick.t_start = 0.75;
  kick.t_end = 0.76;
  kick.moment = Vec3(-500, 0, 0);
  in.wrench_schedule.push_back(kick);
  in.steps = steps;
  return in;
}

}  // namespace patchsim::fixtures
