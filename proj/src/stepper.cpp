#include "patchsim/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "patchsim/oracle.hpp"
#include "patchsim/rng.hpp"

namespace patchsim {

void validate_friction(const FrictionParams& friction) {
  if (!(friction.e_t > 0 && friction.e_o > 0 && friction.e_r > 0)) {
    throw ValidationError("friction ellipsoid constants must be positive");
  }
  if (friction.mu < 0) throw ValidationError("coefficient of friction must be nonnegative");
}

Vec6 coriolis_impulse(const InertialParams& params, const Quat& orientation, const Vec3& omega,
                      double h) {
  Vec6 p = Vec6::Zero();
  p.tail<3>() = -h * omega.cross(world_inertia(params, orientation) * omega);
  return p;
}

namespace {

constexpr double kTouchGapTol = 1e-6;   // on raw surface values
constexpr double kTouchImpulseTol = 1e-8;

double sqr(double v) { return v * v; }

Pose environment_pose(const ConvexBody& env) { return env.frame_offset; }

/// Most-active environment surface's outward unit normal at a point.
Vec3 environment_normal_at(const ConvexBody& env, const Vec3& x_world) {
  const Pose full = environment_pose(env);
  const Vec3 xb = full.to_body(x_world);
  int best = 0;
  double best_f = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < env.surfaces.size(); ++j) {
    const double f = evaluate_surface_body(env.surfaces[j], xb);
    if (f > best_f) {
      best_f = f;
      best = static_cast<int>(j);
    }
  }
  const Vec3 g = full.rotate_to_world(surface_gradient_body_raw(env.surfaces[best], xb));
  const double n = g.norm();
  return n > 1e-12 ? Vec3(g / n) : Vec3(0, 0, 1);
}

/// Picks the designated surface for the closest-point rows: the most active
/// surface at the warm-start ECP, ties (and fully interior starts) broken by
/// gradient alignment with the direction the cone has to produce.
int designate_k1(const ConvexBody& body, const Pose& object_pose, const Vec3& a1_ws,
                 const Vec3& d_want) {
  const Pose full = object_pose.compose(body.frame_offset);
  const Vec3 xb = full.to_body(a1_ws);
  const int m = static_cast<int>(body.surfaces.size());

  std::vector<double> activity(m);
  std::vector<Vec3> unit_grad(m);
  double max_activity = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    const double f = evaluate_surface_body(body.surfaces[i], xb);
    const Vec3 g = surface_gradient_body_raw(body.surfaces[i], xb);
    const double gn = g.norm();
    activity[i] = f / std::max(gn, 1e-12);
    unit_grad[i] = gn > 1e-12 ? Vec3(full.rotate_to_world(g) / gn) : Vec3::Zero();
    max_activity = std::max(max_activity, activity[i]);
  }

  const bool interior = max_activity < -1e-7;
  int best = 0;
  double best_align = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    if (!interior && activity[i] < max_activity - 1e-9) continue;
    if (unit_grad[i].isZero()) continue;
    const double align = unit_grad[i].dot(d_want);
    if (align > best_align) {
      best_align = align;
      best = i;
    }
  }
  return best;
}

Vec3 cone_direction_hint(const ConvexBody& env, const Vec3& a1_ws, const Vec3& a2_ws) {
  const Vec3 gap = a2_ws - a1_ws;
  if (gap.norm() > 1e-6) return gap.normalized();
  return -environment_normal_at(env, a2_ws);
}

}  // namespace

StepSetup::StepSetup(RigidState state_u, InertialParams params, std::vector<ContactPatch> patches,
                     ContactFrame frame, Vec6 applied_impulse, double h, const VecX& warm_start)
    : state_u_(std::move(state_u)),
      params_(std::move(params)),
      patches_(std::move(patches)),
      frame_(frame),
      applied_impulse_(applied_impulse),
      h_(h) {
  inertia_world_u_ = world_inertia(params_, state_u_.orientation);
  coriolis_ = coriolis_impulse(params_, state_u_.orientation, state_u_.angular_velocity, h_);
  quat_rate_u_ = quat_rate_matrix(state_u_.orientation);
  quat_u_ = quat_wxyz(state_u_.orientation);

  int offset = 6;
  num_eq_ = 6;
  for (const auto& patch : patches_) {
    const int m_a = static_cast<int>(patch.object_body.surfaces.size());
    const int n_b = static_cast<int>(patch.environment_body.surfaces.size());
    base_.push_back(offset);
    m_a_.push_back(m_a);
    n_b_.push_back(n_b);
    offset += 11 + m_a + n_b;
    num_eq_ += 10;
  }
  dim_ = offset;
  if (warm_start.size() != dim_) {
    throw ValidationError("warm start layout mismatch: expected " + std::to_string(dim_) +
                          " unknowns, got " + std::to_string(warm_start.size()));
  }

  const Pose pose_u{state_u_.position, state_u_.orientation};
  for (int i = 0; i < patch_count(); ++i) {
    const Vec3 a1_ws = warm_start.segment<3>(base_[i] + 5);
    const Vec3 a2_ws = warm_start.segment<3>(base_[i] + 8);
    const Vec3 hint = cone_direction_hint(patches_[i].environment_body, a1_ws, a2_ws);
    k1_.push_back(designate_k1(patches_[i].object_body, pose_u, a1_ws, hint));
  }

  for (int i = 0; i < patch_count(); ++i) {
    const int b = base_[i];
    pair_z_.push_back(b + 4);  // friction ellipsoid vs sigma
    for (int c = 0; c < m_a_[i]; ++c) pair_z_.push_back(b + 11 + c);
    for (int c = 0; c < n_b_[i]; ++c) pair_z_.push_back(b + 11 + m_a_[i] + c);
    pair_z_.push_back(b);      // non-penetration vs p_n
  }
}

Pose StepSetup::end_object_pose(const VecX& x) const {
  const Vec3 pos = state_u_.position + h_ * x.segment<3>(0);
  const Vec4 qv = quat_u_ + h_ * (quat_rate_u_ * x.segment<3>(3));
  return Pose{pos, quat_from_wxyz(qv / qv.norm())};
}

double StepSetup::quaternion_drift(const VecX& x) const {
  const Vec4 qv = quat_u_ + h_ * (quat_rate_u_ * x.segment<3>(3));
  return std::abs(qv.norm() - 1.0);
}

RigidState StepSetup::advance_state(const VecX& x) const {
  const Pose pose = end_object_pose(x);
  RigidState next;
  next.position = pose.position;
  next.orientation = pose.orientation;
  next.linear_velocity = x.segment<3>(0);
  next.angular_velocity = x.segment<3>(3);
  return next;
}

ContactPatchVars StepSetup::extract_patch(const VecX& x, int i) const {
  const int b = base_[i];
  ContactPatchVars vars;
  vars.p_n = x[b];
  vars.p_t = x[b + 1];
  vars.p_o = x[b + 2];
  vars.p_r = x[b + 3];
  vars.sigma = x[b + 4];
  vars.a1 = x.segment<3>(b + 5);
  vars.a2 = x.segment<3>(b + 8);
  vars.l = x.segment(b + 11, m_a_[i] + n_b_[i]);
  return vars;
}

void StepSetup::residual(const VecX& x, VecX& eq, VecX& w) const {
  const Vec3 v_next = x.segment<3>(0);
  const Vec3 omega_next = x.segment<3>(3);
  const Vec3 pos_next = state_u_.position + h_ * v_next;
  const Pose obj_pose = end_object_pose(x);

  Vec6 ne;
  ne.head<3>() = params_.mass * (v_next - state_u_.linear_velocity);
  ne.tail<3>() = inertia_world_u_ * (omega_next - state_u_.angular_velocity);
  ne -= applied_impulse_ + coriolis_;

  int eq_off = 6;
  int w_off = 0;
  for (int i = 0; i < patch_count(); ++i) {
    const auto& patch = patches_[i];
    const int b = base_[i];
    const double p_n = x[b], p_t = x[b + 1], p_o = x[b + 2], p_r = x[b + 3], sigma = x[b + 4];
    const Vec3 a1 = x.segment<3>(b + 5);
    const Vec3 a2 = x.segment<3>(b + 8);

    const Pose full_a = obj_pose.compose(patch.object_body.frame_offset);
    const Pose full_b = environment_pose(patch.environment_body);
    const Vec3 a1_body = full_a.to_body(a1);
    const Vec3 a2_env = full_b.to_body(a2);
    const Vec3 a2_obj = full_a.to_body(a2);

    const Vec3 r = a2 - pos_next;
    const Vec3 &t = frame_.t, &o = frame_.o, &n = frame_.n;

    ne.head<3>() -= n * p_n + t * p_t + o * p_o;
    ne.tail<3>() -= r.cross(n) * p_n + r.cross(t) * p_t + r.cross(o) * p_o + n * p_r;

    // Friction balance at the end-of-step ECP velocity.
    const double wt_nu = t.dot(v_next) + r.cross(t).dot(omega_next);
    const double wo_nu = o.dot(v_next) + r.cross(o).dot(omega_next);
    const double wr_nu = n.dot(omega_next);
    const auto& fr = patch.friction;
    eq[eq_off + 0] = sqr(fr.e_t) * fr.mu * p_n * wt_nu + p_t * sigma;
    eq[eq_off + 1] = sqr(fr.e_o) * fr.mu * p_n * wo_nu + p_o * sigma;
    eq[eq_off + 2] = sqr(fr.e_r) * fr.mu * p_n * wr_nu + p_r * sigma;

    // Closest-point rows: the designated surface carries the unit coefficient,
    // its multiplier scales the separation.
    const int k1 = k1_[i];
    Vec3 cone_a = full_a.rotate_to_world(surface_gradient_body_raw(patch.object_body.surfaces[k1], a1_body));
    for (int c = 0; c < m_a_[i]; ++c) {
      if (c == k1) continue;
      cone_a += x[b + 11 + c] *
                full_a.rotate_to_world(surface_gradient_body_raw(patch.object_body.surfaces[c], a1_body));
    }
    eq.segment<3>(eq_off + 3) = a1 - a2 + x[b + 11 + k1] * cone_a;

    Vec3 cone_b = Vec3::Zero();
    for (int c = 0; c < n_b_[i]; ++c) {
      cone_b += x[b + 11 + m_a_[i] + c] *
                full_b.rotate_to_world(surface_gradient_body_raw(patch.environment_body.surfaces[c], a2_env));
    }
    eq.segment<3>(eq_off + 6) = cone_a + cone_b;

    // The designated surface must stay active at a1; without this row the
    // closest-point rows admit interpenetrating roots once l_k1 hits zero
    // (the cone vector would use an off-surface gradient).  The row makes the
    // residual one taller than the unknowns per patch, which the
    // least-squares Newton direction absorbs.
    eq[eq_off + 9] = evaluate_surface_body(patch.object_body.surfaces[k1], a1_body);
    eq_off += 10;

    // Complementarity: ellipsoid slack vs slip speed, membership per surface,
    // then non-penetration.  The slack uses the square-root form
    // μ·p_n - ‖p/e‖ (same sign and zero set as the quadratic form) so the row
    // stays first-order regular when a patch unloads.
    w[w_off++] = fr.mu * p_n - std::sqrt(sqr(p_t / fr.e_t) + sqr(p_o / fr.e_o) + sqr(p_r / fr.e_r));
    for (int c = 0; c < m_a_[i]; ++c) {
      w[w_off++] = -evaluate_surface_body(patch.object_body.surfaces[c], a1_body);
    }
    for (int c = 0; c < n_b_[i]; ++c) {
      w[w_off++] = -evaluate_surface_body(patch.environment_body.surfaces[c], a2_env);
    }
    double max_f = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < m_a_[i]; ++c) {
      max_f = std::max(max_f, evaluate_surface_body(patch.object_body.surfaces[c], a2_obj));
    }
    w[w_off++] = max_f;
  }
  eq.head<6>() = ne;
}

std::shared_ptr<const StepSetup> assemble_step_residual(
    const RigidState& state_u, const InertialParams& params,
    const std::vector<ContactPatch>& patches, const ContactFrame& frame,
    const Vec6& applied_impulse, double h, const VecX& warm_start) {
  return std::make_shared<const StepSetup>(state_u, params, patches, frame, applied_impulse, h,
                                           warm_start);
}

MncpProblem make_step_problem(std::shared_ptr<const StepSetup> setup) {
  MncpProblem p;
  p.dimension = setup->dimension();
  p.num_equalities = setup->num_equalities();
  p.pair_z_index = setup->pair_z_;
  p.residual = [setup](const VecX& x, VecX& eq, VecX& w) { setup->residual(x, eq, w); };
  p.layout.push_back({"nu", 0, 6});
  for (int i = 0; i < setup->patch_count(); ++i) {
    const int b = setup->patch_base(i);
    const std::string tag = "patch" + std::to_string(i);
    p.layout.push_back({tag + ".p", b, 4});
    p.layout.push_back({tag + ".sigma", b + 4, 1});
    p.layout.push_back({tag + ".a1", b + 5, 3});
    p.layout.push_back({tag + ".a2", b + 8, 3});
    p.layout.push_back({tag + ".l", b + 11,
                        setup->object_surface_count(i) + setup->environment_surface_count(i)});
  }
  return p;
}

VecX initial_guess(const RigidState& state_u, const InertialParams& params,
                   const std::vector<ContactPatch>& patches, const ContactFrame& frame,
                   double gravity_beta, double h, std::optional<uint64_t> seed) {
  int dim = 6;
  for (const auto& patch : patches) {
    dim += 11 + static_cast<int>(patch.object_body.surfaces.size()) +
           static_cast<int>(patch.environment_body.surfaces.size());
  }
  VecX x = VecX::Zero(dim);
  x.head<6>() = state_u.generalized_velocity();

  std::optional<Rng> rng;
  if (seed) rng.emplace(*seed);

  const Pose pose_u{state_u.position, state_u.orientation};
  int b = 6;
  for (const auto& patch : patches) {
    const int m_a = static_cast<int>(patch.object_body.surfaces.size());
    const int n_b = static_cast<int>(patch.environment_body.surfaces.size());
    const auto cp = closest_points_bruteforce(patch.object_body, pose_u, patch.environment_body,
                                              environment_pose(patch.environment_body));
    Vec3 a1 = cp.a1;
    Vec3 a2 = cp.a2;
    if (rng) {
      const Aabb box = body_aabb(patch.object_body, pose_u);
      const Vec3 ext = box.hi - box.lo;
      const double width_t = std::abs(frame.t.x()) * ext.x() + std::abs(frame.t.y()) * ext.y() +
                             std::abs(frame.t.z()) * ext.z();
      const double width_o = std::abs(frame.o.x()) * ext.x() + std::abs(frame.o.y()) * ext.y() +
                             std::abs(frame.o.z()) * ext.z();
      const double radius = 0.5 * std::max(width_t, width_o);
      // Perturb the object-side point inside the patch, then keep the pair
      // consistent by projecting it across to the environment.
      const double rad = radius * std::sqrt(rng->u01());
      const double ang = 2.0 * M_PI * rng->u01();
      const Vec3 shift = rad * (std::cos(ang) * frame.t + std::sin(ang) * frame.o);
      a1 = project_onto_body(patch.object_body, pose_u, a1 + shift);
      a2 = project_onto_body(patch.environment_body, environment_pose(patch.environment_body), a1);
    }

    const bool near_touch = cp.distance <= kTouchImpulseTol;
    x[b] = near_touch ? params.mass * gravity_beta * h / static_cast<double>(patches.size()) : 0.0;

    const Vec3 r = a2 - state_u.position;
    const Vec3 v_ecp = state_u.linear_velocity + state_u.angular_velocity.cross(r);
    const auto& fr = patch.friction;
    x[b + 4] = std::sqrt(sqr(fr.e_t * frame.t.dot(v_ecp)) + sqr(fr.e_o * frame.o.dot(v_ecp)) +
                         sqr(fr.e_r * frame.n.dot(state_u.angular_velocity)));

    x.segment<3>(b + 5) = a1;
    x.segment<3>(b + 8) = a2;

    const Pose full_a = pose_u.compose(patch.object_body.frame_offset);
    const Vec3 a1_body = full_a.to_body(a1);
    for (int c = 0; c < m_a; ++c) {
      x[b + 11 + c] =
          std::abs(evaluate_surface_body(patch.object_body.surfaces[c], a1_body)) <= kTouchGapTol ? 1.0 : 0.0;
    }
    const Pose full_b = environment_pose(patch.environment_body);
    const Vec3 a2_env = full_b.to_body(a2);
    for (int c = 0; c < n_b; ++c) {
      x[b + 11 + m_a + c] =
          std::abs(evaluate_surface_body(patch.environment_body.surfaces[c], a2_env)) <= kTouchGapTol ? 1.0
                                                                                                      : 0.0;
    }
    b += 11 + m_a + n_b;
  }
  return x;
}

namespace {

/// Free-flight end-of-step velocity: the applied and gyroscopic impulses with
/// no contact forces.  Far better than the previous step's velocity when a
/// large one-step wrench arrives.
Vec6 predicted_velocity(const RigidState& state_u, const InertialParams& params,
                        const Vec6& applied_impulse, double h) {
  Vec6 nu = state_u.generalized_velocity();
  const Vec6 impulse = applied_impulse + coriolis_impulse(params, state_u.orientation,
                                                          state_u.angular_velocity, h);
  nu.head<3>() += impulse.head<3>() / params.mass;
  nu.tail<3>() += world_inertia(params, state_u.orientation).ldlt().solve(impulse.tail<3>());
  return nu;
}

}  // namespace

StepResult step(const RigidState& state_u, const InertialParams& params,
                const std::vector<ContactPatch>& patches, const ContactFrame& frame,
                const Vec6& applied_impulse, double h, const SolverConfig& config,
                const VecX& warm_start) {
  if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");

  const auto setup =
      assemble_step_residual(state_u, params, patches, frame, applied_impulse, h, warm_start);
  const MncpProblem problem = make_step_problem(setup);
  MncpSolution sol = solve(problem, warm_start, config);

  if (sol.status != SolveStatus::Converged) {
    // Retry ladder: the warm start cannot anticipate large one-step wrenches
    // or contact-mode flips, so re-seed the velocity slot with the
    // free-flight prediction, then fall back to a fresh oracle guess.
    VecX kicked = warm_start;
    kicked.head<6>() = predicted_velocity(state_u, params, applied_impulse, h);
    sol = solve(problem, kicked, config);
    if (sol.status != SolveStatus::Converged) {
      VecX fresh = initial_guess(state_u, params, patches, frame,
                                 -applied_impulse[2] / (params.mass * h), h);
      fresh.head<6>() = predicted_velocity(state_u, params, applied_impulse, h);
      const auto fresh_setup =
          assemble_step_residual(state_u, params, patches, frame, applied_impulse, h, fresh);
      sol = solve(make_step_problem(fresh_setup), fresh, config);
    }
  }

  StepResult result;
  result.status = sol.status;
  result.residual_norm = sol.residual_norm;
  result.iterations = sol.iterations;
  result.restarts = sol.restarts_used;
  result.unknowns = sol.x;

  if (sol.status != SolveStatus::Converged) {
    result.state = state_u;  // untouched on failure
    return result;
  }

  result.state = setup->advance_state(sol.x);
  result.quaternion_drift = setup->quaternion_drift(sol.x);
  const Pose end_pose = setup->end_object_pose(sol.x);
  for (int i = 0; i < setup->patch_count(); ++i) {
    ContactPatchVars vars = setup->extract_patch(sol.x, i);
    const double gap = body_max_value(patches[i].object_body, end_pose, vars.a2);
    result.modes.push_back((vars.p_n > kTouchImpulseTol || gap < kTouchGapTol)
                               ? ContactMode::Touching
                               : ContactMode::Separated);
    result.patches.push_back(std::move(vars));
  }
  return result;
}

ContactRowsResult solve_contact_rows(const ConvexBody& body_a, const Pose& pose_a,
                                     const ConvexBody& body_b, const Pose& pose_b,
                                     const SolverConfig& config) {
  const int m_a = static_cast<int>(body_a.surfaces.size());
  const int n_b = static_cast<int>(body_b.surfaces.size());
  const int dim = 6 + m_a + n_b;

  // Neutral seeds: box centers pushed onto the bodies.
  const Aabb box_a = body_aabb(body_a, pose_a);
  Vec3 a1g = project_onto_body(body_a, pose_a, box_a.center());
  const Aabb box_b = body_aabb(body_b, pose_b);
  Vec3 a2g = project_onto_body(body_b, pose_b, box_b.bounded() ? box_b.center() : a1g);

  const Vec3 hint = a2g - a1g;
  const int k1 = designate_k1(body_a, pose_a, a1g,
                              hint.norm() > 1e-9 ? Vec3(hint.normalized())
                                                 : -environment_normal_at(body_b, a2g));

  const Pose full_a = pose_a.compose(body_a.frame_offset);
  const Pose full_b = pose_b.compose(body_b.frame_offset);

  MncpProblem p;
  p.dimension = dim;
  p.num_equalities = 7;  // KKT rows plus the k1 activity row
  for (int c = 0; c < m_a + n_b; ++c) p.pair_z_index.push_back(6 + c);
  p.residual = [&body_a, &body_b, full_a, full_b, m_a, n_b, k1](const VecX& x, VecX& eq, VecX& w) {
    const Vec3 a1 = x.segment<3>(0);
    const Vec3 a2 = x.segment<3>(3);
    const Vec3 a1_body = full_a.to_body(a1);
    const Vec3 a2_body = full_b.to_body(a2);

    Vec3 cone_a = full_a.rotate_to_world(surface_gradient_body_raw(body_a.surfaces[k1], a1_body));
    for (int c = 0; c < m_a; ++c) {
      if (c == k1) continue;
      cone_a += x[6 + c] * full_a.rotate_to_world(surface_gradient_body_raw(body_a.surfaces[c], a1_body));
    }
    Vec3 cone_b = Vec3::Zero();
    for (int c = 0; c < n_b; ++c) {
      cone_b += x[6 + m_a + c] *
                full_b.rotate_to_world(surface_gradient_body_raw(body_b.surfaces[c], a2_body));
    }
    eq.segment<3>(0) = a1 - a2 + x[6 + k1] * cone_a;
    eq.segment<3>(3) = cone_a + cone_b;
    eq[6] = evaluate_surface_body(body_a.surfaces[k1], a1_body);
    for (int c = 0; c < m_a; ++c) w[c] = -evaluate_surface_body(body_a.surfaces[c], a1_body);
    for (int c = 0; c < n_b; ++c) w[m_a + c] = -evaluate_surface_body(body_b.surfaces[c], a2_body);
  };

  VecX x0 = VecX::Zero(dim);
  x0.segment<3>(0) = a1g;
  x0.segment<3>(3) = a2g;
  x0.tail(m_a + n_b).setOnes();

  const MncpSolution sol = solve(p, x0, config);
  ContactRowsResult out;
  out.a1 = sol.x.segment<3>(0);
  out.a2 = sol.x.segment<3>(3);
  out.distance = (out.a1 - out.a2).norm();
  out.status = sol.status;
  return out;
}

Vec6 applied_impulse_at(const SimulationInput& input, double t) {
  Vec6 p = Vec6::Zero();
  const double t_mid = t + 0.5 * input.h;  // robust window test on the step grid
  for (const auto& w : input.wrench_schedule) {
    if (t_mid >= w.t_start && t_mid < w.t_end) {
      p.head<3>() += input.h * w.force;
      p.tail<3>() += input.h * w.moment;
    }
  }
  p[2] -= input.params.mass * input.gravity * input.h;
  return p;
}

Trajectory simulate(const SimulationInput& input) {
  if (input.steps < 0) throw std::invalid_argument("horizon must be nonnegative");
  Trajectory traj;
  traj.h = input.h;
  traj.steps.reserve(input.steps);

  RigidState state = input.initial_state;
  VecX warm = initial_guess(state, input.params, input.patches, input.frame, input.gravity, input.h,
                            input.guess_seed);
  for (int k = 0; k < input.steps; ++k) {
    const Vec6 impulse = applied_impulse_at(input, k * input.h);
    StepResult r =
        step(state, input.params, input.patches, input.frame, impulse, input.h, input.solver, warm);
    if (r.status != SolveStatus::Converged) {
      traj.steps.push_back(std::move(r));
      traj.completed = false;
      traj.failed_step = k;
      return traj;
    }
    state = r.state;
    warm = r.unknowns;
    traj.steps.push_back(std::move(r));
  }
  return traj;
}

}  // namespace patchsim
