#pragma once

#include <optional>
#include <vector>

#include "patchsim/geom.hpp"
#include "patchsim/stepper_types.hpp"

namespace patchsim {

/// Raised when the slip speed would not stay positive, i.e. the closed-form
/// slipping solution does not apply.
struct StickingRegime : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One backward-Euler step of planar sliding with pure translation and
/// isotropic friction; maintained surface contact (n·v = 0) is assumed.
struct TranslationStepInput {
  double mass = 1.0;
  ContactFrame frame;
  Vec3 v_u{Vec3::Zero()};
  Vec3 j_app{Vec3::Zero()};  // applied impulse over the step, gravity included
  FrictionParams friction;
};

struct TranslationStepResult {
  Vec3 v_next{Vec3::Zero()};
  double sum_p_t = 0.0;
  double sum_p_o = 0.0;
  double sum_p_r = 0.0;
  double sum_p_n = 0.0;
};

/// Closed-form sums of contact impulses and the end-of-step velocity.
/// Throws StickingRegime when the slipping assumption fails and
/// std::invalid_argument on precondition violations.
TranslationStepResult pure_translation_step(const TranslationStepInput& input);

struct TranslationTrajectory {
  struct Step {
    Vec3 position;  // end-of-step center of mass
    Vec3 velocity;
    TranslationStepResult impulses;
  };
  std::vector<Step> steps;
  std::optional<int> stuck_step;  // set when slip ceased before the horizon
};

/// Iterates pure_translation_step, integrating position with the end-of-step
/// velocity; stops (and records the index) if the motion sticks.
TranslationTrajectory translation_trajectory(const TranslationStepInput& first_step,
                                             const Vec3& start_position, double h, int steps);

}  // namespace patchsim
