#include "patchsim/analytic.hpp"

#include <cmath>

namespace patchsim {

TranslationStepResult pure_translation_step(const TranslationStepInput& input) {
  const auto& fr = input.friction;
  if (std::abs(fr.e_t - fr.e_o) > 1e-12) {
    throw std::invalid_argument("pure translation solution requires isotropic friction (e_t = e_o)");
  }
  if (std::abs(input.frame.n.dot(input.v_u)) > 1e-9) {
    throw std::invalid_argument("normal velocity must vanish (maintained surface contact)");
  }
  const double p_n = -input.frame.n.dot(input.j_app);
  if (!(p_n > 0.0)) {
    throw std::invalid_argument("normal impulse -n·J_app must be positive");
  }

  // Momentum the friction must act against, per tangential axis.
  const double c_t = input.mass * input.frame.t.dot(input.v_u) + input.frame.t.dot(input.j_app);
  const double c_o = input.mass * input.frame.o.dot(input.v_u) + input.frame.o.dot(input.j_app);
  const double c_norm = std::hypot(c_t, c_o);
  const double e = fr.e_t;

  if (c_norm <= e * fr.mu * p_n + 1e-15) {
    throw StickingRegime("slip speed would not stay positive; the slipping closed form does not apply");
  }

  TranslationStepResult out;
  out.sum_p_n = p_n;
  out.sum_p_r = 0.0;  // slip speed is nonzero, so the spin sum vanishes
  out.sum_p_t = -e * fr.mu * p_n * c_t / c_norm;
  out.sum_p_o = -e * fr.mu * p_n * c_o / c_norm;

  const double v_t = (c_t + out.sum_p_t) / input.mass;
  const double v_o = (c_o + out.sum_p_o) / input.mass;
  out.v_next = v_t * input.frame.t + v_o * input.frame.o;
  return out;
}

TranslationTrajectory translation_trajectory(const TranslationStepInput& first_step,
                                             const Vec3& start_position, double h, int steps) {
  if (h <= 0.0) throw std::invalid_argument("step size must be positive");
  TranslationTrajectory out;
  TranslationStepInput input = first_step;
  Vec3 position = start_position;
  for (int k = 0; k < steps; ++k) {
    TranslationStepResult r;
    try {
      r = pure_translation_step(input);
    } catch (const StickingRegime&) {
      out.stuck_step = k;
      break;
    }
    position += h * r.v_next;
    out.steps.push_back({position, r.v_next, r});
    input.v_u = r.v_next;
  }
  return out;
}

}  // namespace patchsim
