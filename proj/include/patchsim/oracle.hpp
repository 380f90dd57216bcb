#pragma once

#include "patchsim/geom.hpp"

namespace patchsim {

struct OracleNoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closest pair between two convex bodies.  Exactly one of distance and
/// penetration_depth is positive; for disjoint or touching bodies a1/a2 lie on
/// the respective boundaries within the oracle tolerance.
struct ClosestPointResult {
  Vec3 a1{Vec3::Zero()};
  Vec3 a2{Vec3::Zero()};
  double distance = 0.0;
  double penetration_depth = 0.0;
};

/// Exact projection of a point onto a body (Dykstra's cyclic scheme over the
/// per-surface projections).
Vec3 project_onto_body(const ConvexBody& body, const Pose& object_pose, const Vec3& x_world,
                       double tol = 1e-9, int max_cycles = 500);

/// Distance minimization by alternating projections, seeded from a coarse grid
/// over each body's bounding box.  Both bodies bounded, or one an environment
/// half-space.  Throws OracleNoConvergence if the iteration cap is hit.
ClosestPointResult closest_points_bruteforce(const ConvexBody& body_a, const Pose& pose_a,
                                             const ConvexBody& body_b, const Pose& pose_b,
                                             double tol = 1e-9);

/// Sampled lower bound on how deep A's interior reaches into B; zero when the
/// interiors are disjoint.  Monotone in samples_per_axis.
double penetration_depth(const ConvexBody& body_a, const Pose& pose_a, const ConvexBody& body_b,
                         const Pose& pose_b, double tol = 1e-9, int samples_per_axis = 13);

}  // namespace patchsim
