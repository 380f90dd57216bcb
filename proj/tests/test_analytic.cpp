#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "patchsim/analytic.hpp"
#include "patchsim/rng.hpp"

using namespace patchsim;

namespace {

TranslationStepInput table_input() {
  TranslationStepInput in;
  in.mass = 5.0;
  in.frame = ContactFrame{};  // t=x, o=y, n=z
  in.v_u = Vec3(4, 3, 0);
  in.j_app = Vec3(0, 0, -5.0 * 9.8 * 0.01);  // gravity only
  in.friction = FrictionParams{1.0, 1.0, 1.0, 0.12};
  return in;
}

}  // namespace

TEST_CASE("sliding table step") {
  const auto r = pure_translation_step(table_input());
  CHECK(r.sum_p_n == doctest::Approx(0.49).epsilon(1e-12));
  CHECK(r.sum_p_t == doctest::Approx(-0.04704).epsilon(1e-12));
  CHECK(r.sum_p_o == doctest::Approx(-0.03528).epsilon(1e-12));
  CHECK(r.sum_p_r == 0.0);
  CHECK(r.v_next.x() == doctest::Approx(3.990592).epsilon(1e-12));
  CHECK(r.v_next.y() == doctest::Approx(2.992944).epsilon(1e-12));
  CHECK(r.v_next.z() == doctest::Approx(0.0));
}

TEST_CASE("one-dimensional slip keeps the lateral sum zero") {
  auto in = table_input();
  in.v_u = Vec3(2, 0, 0);
  const auto r = pure_translation_step(in);
  CHECK(r.sum_p_o == doctest::Approx(0.0));
  CHECK(r.sum_p_t == doctest::Approx(-in.friction.mu * r.sum_p_n * in.friction.e_t).epsilon(1e-12));
}

TEST_CASE("sticking regime is reported") {
  auto in = table_input();
  in.v_u = Vec3::Zero();
  CHECK_THROWS_AS(pure_translation_step(in), StickingRegime);

  // Nonzero but sub-threshold momentum also sticks.
  in.v_u = Vec3(1e-4, 0, 0);
  CHECK_THROWS_AS(pure_translation_step(in), StickingRegime);
}

TEST_CASE("precondition violations") {
  auto in = table_input();
  in.v_u = Vec3(1, 0, 0.5);
  CHECK_THROWS_AS(pure_translation_step(in), std::invalid_argument);

  in = table_input();
  in.friction.e_o = 2.0;
  CHECK_THROWS_AS(pure_translation_step(in), std::invalid_argument);

  in = table_input();
  in.j_app = Vec3(0, 0, 0.1);
  CHECK_THROWS_AS(pure_translation_step(in), std::invalid_argument);
}

TEST_CASE("trajectory integrates with the end-of-step velocity") {
  const auto traj = translation_trajectory(table_input(), Vec3::Zero(), 0.01, 1);
  REQUIRE(traj.steps.size() == 1);
  CHECK(traj.steps[0].position.x() == doctest::Approx(0.01 * 3.990592).epsilon(1e-12));
  CHECK(traj.steps[0].position.y() == doctest::Approx(0.01 * 2.992944).epsilon(1e-12));
}

TEST_CASE("frictionless sliding keeps the velocity") {
  auto in = table_input();
  in.friction.mu = 0.0;
  const auto traj = translation_trajectory(in, Vec3::Zero(), 0.01, 50);
  REQUIRE(traj.steps.size() == 50);
  for (const auto& s : traj.steps) {
    CHECK((s.velocity - in.v_u).norm() <= 1e-12);
  }
}

TEST_CASE("speed decays monotonically until sticking") {
  auto in = table_input();
  in.v_u = Vec3(0.3, 0.1, 0);
  const auto traj = translation_trajectory(in, Vec3::Zero(), 0.01, 5000);
  REQUIRE(traj.stuck_step.has_value());
  double prev = in.v_u.norm();
  for (const auto& s : traj.steps) {
    const double speed = s.velocity.norm();
    CHECK(speed <= prev + 1e-15);
    prev = speed;
  }
}

TEST_CASE("friction sum saturates the ellipsoid and opposes slip") {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    TranslationStepInput in;
    in.mass = rng.uniform(0.5, 10);
    in.frame = frame_from_normal(Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
    const double vt = rng.uniform(-3, 3);
    const double vo = rng.uniform(-3, 3);
    in.v_u = vt * in.frame.t + vo * in.frame.o;
    in.friction = FrictionParams{rng.uniform(0.5, 2), 0, rng.uniform(0.5, 2), rng.uniform(0.01, 1)};
    in.friction.e_o = in.friction.e_t;
    in.j_app = (rng.uniform(-1, 1) * in.frame.t + rng.uniform(-1, 1) * in.frame.o -
                rng.uniform(0.1, 2) * in.frame.n);

    TranslationStepResult r;
    try {
      r = pure_translation_step(in);
    } catch (const StickingRegime&) {
      continue;
    }

    const double lhs = std::hypot(r.sum_p_t / in.friction.e_t, r.sum_p_o / in.friction.e_o);
    CHECK(lhs == doctest::Approx(in.friction.mu * r.sum_p_n).epsilon(1e-12));

    const double c_t = in.mass * in.frame.t.dot(in.v_u) + in.frame.t.dot(in.j_app);
    const double c_o = in.mass * in.frame.o.dot(in.v_u) + in.frame.o.dot(in.j_app);
    const double cross = r.sum_p_t * c_o - r.sum_p_o * c_t;
    const double dot = r.sum_p_t * c_t + r.sum_p_o * c_o;
    CHECK(std::abs(cross) <= 1e-12 * std::hypot(c_t, c_o) * std::hypot(r.sum_p_t, r.sum_p_o) + 1e-300);
    CHECK(dot < 0.0);
  }
}
