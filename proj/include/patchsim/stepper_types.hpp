#pragma once

#include <vector>

#include "patchsim/geom.hpp"
#include "patchsim/mncp.hpp"

namespace patchsim {

/// Friction-ellipsoid constants. e_t, e_o are dimensionless, e_r is a length
/// (torsional scale), mu is the coefficient of friction.
struct FrictionParams {
  double e_t = 1.0;
  double e_o = 1.0;
  double e_r = 1.0;
  double mu = 0.0;
};

void validate_friction(const FrictionParams& friction);

/// A potential contact between one convex body of the moving object and one
/// environment body; every pair stays in the system whether or not it touches.
struct ContactPatch {
  ConvexBody object_body;
  ConvexBody environment_body;  // world frame, static
  FrictionParams friction;
};

/// Piecewise-constant external load, active on [t_start, t_end).
struct AppliedWrench {
  double t_start = 0.0;
  double t_end = std::numeric_limits<double>::infinity();
  Vec3 force{Vec3::Zero()};    // N
  Vec3 moment{Vec3::Zero()};   // N*m
};

/// Per-patch unknowns at a solved step: the ECP pair, impulses, slip-speed
/// multiplier, and the KKT multipliers (object-body surfaces first, then
/// environment surfaces).
struct ContactPatchVars {
  Vec3 a1{Vec3::Zero()};
  Vec3 a2{Vec3::Zero()};
  double p_n = 0.0;
  double p_t = 0.0;
  double p_o = 0.0;
  double p_r = 0.0;
  double sigma = 0.0;
  VecX l;
};

enum class ContactMode { Separated, Touching };

struct StepResult {
  RigidState state;
  std::vector<ContactPatchVars> patches;
  std::vector<ContactMode> modes;
  SolveStatus status = SolveStatus::MaxIterations;
  double residual_norm = 0.0;
  int iterations = 0;
  int restarts = 0;
  double quaternion_drift = 0.0;  // |norm - 1| before renormalization
  VecX unknowns;                  // full solution vector, reusable as warm start
};

}  // namespace patchsim
