#pragma once

#include <memory>
#include <optional>

#include "patchsim/mncp.hpp"
#include "patchsim/stepper_types.hpp"

namespace patchsim {

/// Gyroscopic impulse (0, -h·ω×(R·I_cm·Rᵀ·ω)) at the beginning-of-step state.
Vec6 coriolis_impulse(const InertialParams& params, const Quat& orientation, const Vec3& omega,
                      double h);

/// One time step assembled as a mixed nonlinear complementarity problem.
///
/// Unknown layout: [ν (6) | per patch: p_n, p_t, p_o, p_r, σ, a1 (3), a2 (3),
/// l (object surfaces, then environment surfaces)].  The end-of-step pose is
/// eliminated through the kinematic map, so every contact quantity is a
/// function of ν; this is what makes the step geometrically implicit.
///
/// Equality rows: discretized Newton-Euler (6), then per patch the three
/// friction-balance rows and the six closest-point rows (the designated
/// surface k1 carries the unit gradient coefficient, its multiplier scales
/// the pair separation).  Complementarity pairs per patch: friction ellipsoid
/// vs σ, surface membership for every multiplier, and non-penetration
/// (p_n vs the object's max surface value at a2).
class StepSetup {
 public:
  StepSetup(RigidState state_u, InertialParams params, std::vector<ContactPatch> patches,
            ContactFrame frame, Vec6 applied_impulse, double h, const VecX& warm_start);

  int dimension() const { return dim_; }
  int num_equalities() const { return num_eq_; }
  int num_pairs() const { return static_cast<int>(pair_z_.size()); }
  int patch_count() const { return static_cast<int>(patches_.size()); }

  int patch_base(int i) const { return base_[i]; }
  int object_surface_count(int i) const { return m_a_[i]; }
  int environment_surface_count(int i) const { return n_b_[i]; }
  int designated_surface(int i) const { return k1_[i]; }

  void residual(const VecX& x, VecX& equalities, VecX& pair_w) const;

  /// End-of-step state per the kinematic map, quaternion renormalized.
  RigidState advance_state(const VecX& x) const;
  double quaternion_drift(const VecX& x) const;
  Pose end_object_pose(const VecX& x) const;
  ContactPatchVars extract_patch(const VecX& x, int i) const;

  const RigidState& state_u() const { return state_u_; }
  const std::vector<ContactPatch>& patches() const { return patches_; }
  const ContactFrame& frame() const { return frame_; }
  double step_size() const { return h_; }

 private:
  RigidState state_u_;
  InertialParams params_;
  std::vector<ContactPatch> patches_;
  ContactFrame frame_;
  Vec6 applied_impulse_;
  double h_;

  Mat3 inertia_world_u_;
  Vec6 coriolis_;
  Eigen::Matrix<double, 4, 3> quat_rate_u_;
  Vec4 quat_u_;

  std::vector<int> base_;
  std::vector<int> m_a_;
  std::vector<int> n_b_;
  std::vector<int> k1_;
  std::vector<int> pair_z_;
  int dim_ = 0;
  int num_eq_ = 0;

  friend MncpProblem make_step_problem(std::shared_ptr<const StepSetup> setup);
};

/// Throws ValidationError on layout mismatches (warm start dimension).
std::shared_ptr<const StepSetup> assemble_step_residual(
    const RigidState& state_u, const InertialParams& params,
    const std::vector<ContactPatch>& patches, const ContactFrame& frame,
    const Vec6& applied_impulse, double h, const VecX& warm_start);

MncpProblem make_step_problem(std::shared_ptr<const StepSetup> setup);

/// Warm-start vector: ν carried over, ECPs from the brute-force oracle,
/// impulses zero except p_n = mβh/n_patches on near-touching patches, σ from
/// the current slip speed, multipliers 1 on active surfaces.  When seed is
/// set, the ECP pair of every patch is additionally perturbed uniformly in
/// the tangent disk of the patch circumradius (reproducible per seed).
VecX initial_guess(const RigidState& state_u, const InertialParams& params,
                   const std::vector<ContactPatch>& patches, const ContactFrame& frame,
                   double gravity_beta, double h, std::optional<uint64_t> seed = std::nullopt);

/// Solves the assembled step; on convergence advances the state (quaternion
/// renormalized), otherwise leaves it unchanged and reports the status.
/// Throws std::invalid_argument for h <= 0.
StepResult step(const RigidState& state_u, const InertialParams& params,
                const std::vector<ContactPatch>& patches, const ContactFrame& frame,
                const Vec6& applied_impulse, double h, const SolverConfig& config,
                const VecX& warm_start);

/// Standalone closest-point solve of the contact rows only (no dynamics):
/// unknowns [a1, a2, l], the same KKT and membership structure as in a step.
struct ContactRowsResult {
  Vec3 a1{Vec3::Zero()};
  Vec3 a2{Vec3::Zero()};
  double distance = 0.0;
  SolveStatus status = SolveStatus::MaxIterations;
};
ContactRowsResult solve_contact_rows(const ConvexBody& body_a, const Pose& pose_a,
                                     const ConvexBody& body_b, const Pose& pose_b,
                                     const SolverConfig& config = {});

/// A full dynamics scenario, file-format agnostic.
struct SimulationInput {
  RigidState initial_state;
  InertialParams params;
  std::vector<ContactPatch> patches;
  ContactFrame frame;
  std::vector<AppliedWrench> wrench_schedule;
  double gravity = 9.8;
  double h = 0.01;
  int steps = 0;
  SolverConfig solver;
  std::optional<uint64_t> guess_seed;  // randomize the first-step ECP guess
};

/// Total applied impulse for the step starting at time t: h times the sum of
/// active schedule entries, plus the gravity impulse -mβh on the z row.
Vec6 applied_impulse_at(const SimulationInput& input, double t);

struct Trajectory {
  std::vector<StepResult> steps;
  bool completed = true;
  int failed_step = -1;
  double h = 0.0;
};

/// Runs the horizon, warm-starting each step from the previous solution.
/// Solver failure stops the run and records the failing step index.
Trajectory simulate(const SimulationInput& input);

}  // namespace patchsim
