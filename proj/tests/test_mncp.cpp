#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>

#include "patchsim/mncp.hpp"
#include "patchsim/rng.hpp"

using namespace patchsim;

namespace {

/// LCP 0 <= z ⟂ Mz + q >= 0 as an MncpProblem over x = z.
MncpProblem lcp_problem(const MatX& m, const VecX& q) {
  MncpProblem p;
  p.dimension = static_cast<int>(q.size());
  p.num_equalities = 0;
  for (int i = 0; i < p.dimension; ++i) p.pair_z_index.push_back(i);
  p.residual = [m, q](const VecX& x, VecX&, VecX& w) { w = m * x + q; };
  return p;
}

/// Independent oracle: enumerate active sets of a small LCP.
std::optional<VecX> lcp_bruteforce(const MatX& m, const VecX& q) {
  const int n = static_cast<int>(q.size());
  for (int mask = 0; mask < (1 << n); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) act.push_back(i);
    }
    VecX z = VecX::Zero(n);
    if (!act.empty()) {
      MatX sub(act.size(), act.size());
      VecX rhs(act.size());
      for (size_t r = 0; r < act.size(); ++r) {
        rhs[r] = -q[act[r]];
        for (size_t c = 0; c < act.size(); ++c) sub(r, c) = m(act[r], act[c]);
      }
      const VecX zs = sub.fullPivLu().solve(rhs);
      for (size_t r = 0; r < act.size(); ++r) z[act[r]] = zs[r];
    }
    const VecX w = m * z + q;
    if ((z.array() >= -1e-12).all() && (w.array() >= -1e-12).all()) return z;
  }
  return std::nullopt;
}

/// Replays a solution through the problem and checks the feasibility bounds.
void check_feasible(const MncpProblem& p, const VecX& x, double tol) {
  VecX eq(p.num_equalities), w(p.num_pairs());
  p.residual(x, eq, w);
  if (eq.size()) CHECK(eq.cwiseAbs().maxCoeff() <= 10 * tol);
  for (int i = 0; i < p.num_pairs(); ++i) {
    CHECK(w[i] >= -10 * tol);
    CHECK(x[p.pair_z_index[i]] >= -10 * tol);
    CHECK(std::abs(w[i] * x[p.pair_z_index[i]]) <= 10 * tol);
  }
}

}  // namespace

TEST_CASE("fischer_burmeister values") {
  CHECK(fischer_burmeister(0, 0) == doctest::Approx(0.0));
  CHECK(fischer_burmeister(0, 5) == doctest::Approx(0.0));
  CHECK(fischer_burmeister(3, 4) == doctest::Approx(2.0));
}

TEST_CASE("fischer_burmeister is equivalent to complementarity") {
  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    double a, b;
    switch (i % 4) {
      case 0:  // generic points
        a = rng.uniform(-5, 5);
        b = rng.uniform(-5, 5);
        break;
      case 1:  // on the a = 0 branch
        a = 0;
        b = rng.uniform(0, 5);
        break;
      case 2:  // on the b = 0 branch
        a = rng.uniform(0, 5);
        b = 0;
        break;
      default:  // near-complementary with jitter
        a = rng.uniform(0, 1e-12);
        b = rng.uniform(0, 5);
        break;
    }
    const bool root = std::abs(fischer_burmeister(a, b)) <= 1e-9;
    const bool complementary = a >= -1e-9 && b >= -1e-9 && std::min(a, b) <= 1e-9;
    if (root) CHECK(complementary);
    if (a >= 0 && b >= 0 && std::abs(a * b) == 0.0) CHECK(std::abs(fischer_burmeister(a, b)) <= 1e-9);
  }
}

TEST_CASE("assemble_fb_residual") {
  MncpProblem eq_only;
  eq_only.dimension = 3;
  eq_only.num_equalities = 3;
  eq_only.residual = [](const VecX& x, VecX& eq, VecX&) { eq = x - Vec3(1, 2, 3); };
  const VecX at = (VecX(3) << 4, 4, 4).finished();
  CHECK((assemble_fb_residual(eq_only, at) - Vec3(3, 2, 1)).norm() == doctest::Approx(0.0));

  MncpProblem comp;
  comp.dimension = 1;
  comp.num_equalities = 0;
  comp.pair_z_index = {0};
  comp.residual = [](const VecX& x, VecX&, VecX& w) { w[0] = x[0] - 1.0; };
  CHECK(assemble_fb_residual(comp, VecX::Ones(1))[0] == doctest::Approx(0.0));
  CHECK(assemble_fb_residual(comp, VecX::Zero(1))[0] == doctest::Approx(-2.0));
}

TEST_CASE("solve: linear equality system in one iteration") {
  MncpProblem p;
  p.dimension = 4;
  p.num_equalities = 4;
  const VecX c = (VecX(4) << 1, -2, 0.5, 9).finished();
  p.residual = [c](const VecX& x, VecX& eq, VecX&) { eq = x - c; };
  const auto sol = solve(p, VecX::Zero(4));
  CHECK(sol.status == SolveStatus::Converged);
  CHECK((sol.x - c).norm() <= 1e-10);
  CHECK(sol.iterations <= 2);
}

TEST_CASE("solve: scalar complementarity") {
  MncpProblem p;
  p.dimension = 1;
  p.num_equalities = 0;
  p.pair_z_index = {0};
  p.residual = [](const VecX& x, VecX&, VecX& w) { w[0] = x[0] - 1.0; };
  const auto sol = solve(p, (VecX(1) << 5.0).finished());
  CHECK(sol.status == SolveStatus::Converged);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-10));
  check_feasible(p, sol.x, 1e-10);
}

TEST_CASE("solve: 2-D LCP against brute force") {
  const MatX m = MatX::Identity(2, 2);
  const VecX q = (VecX(2) << -1, 2).finished();
  const auto expected = lcp_bruteforce(m, q);
  REQUIRE(expected.has_value());
  CHECK(((*expected) - Eigen::Vector2d(1, 0)).norm() == doctest::Approx(0.0));

  const auto sol = solve(lcp_problem(m, q), (VecX(2) << 3, 3).finished());
  CHECK(sol.status == SolveStatus::Converged);
  CHECK((sol.x - *expected).norm() <= 1e-10);
  const VecX w = m * sol.x + q;
  CHECK(w[0] == doctest::Approx(0.0));
  CHECK(w[1] == doctest::Approx(2.0));
}

TEST_CASE("solve: random LCPs stay feasible on convergence") {
  Rng rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.next() % 4);
    MatX a(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
    }
    const MatX m = a * a.transpose() + 0.5 * MatX::Identity(n, n);
    VecX q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.uniform(-2, 2);

    const MncpProblem p = lcp_problem(m, q);
    VecX x0(n);
    for (int i = 0; i < n; ++i) x0[i] = rng.uniform(0, 2);
    const auto sol = solve(p, x0);
    REQUIRE(sol.status == SolveStatus::Converged);
    check_feasible(p, sol.x, 1e-10);

    const auto brute = lcp_bruteforce(m, q);
    REQUIRE(brute.has_value());
    CHECK((sol.x - *brute).norm() <= 1e-8);
  }
}

TEST_CASE("solve is deterministic for a fixed seed") {
  const MatX m = (MatX(2, 2) << 2, 0.3, 0.3, 1).finished();
  const VecX q = (VecX(2) << -1, -4).finished();
  const MncpProblem p = lcp_problem(m, q);
  SolverConfig cfg;
  cfg.seed = 1234;
  const VecX x0 = (VecX(2) << 50, -30).finished();
  const auto a = solve(p, x0, cfg);
  const auto b = solve(p, x0, cfg);
  CHECK(a.status == b.status);
  CHECK(a.iterations == b.iterations);
  CHECK(a.restarts_used == b.restarts_used);
  CHECK(memcmp(a.x.data(), b.x.data(), sizeof(double) * 2) == 0);
}

TEST_CASE("non-convergence is reported, not thrown") {
  // 0 <= x ⟂ -1 >= 0 has no solution.
  MncpProblem p;
  p.dimension = 1;
  p.num_equalities = 0;
  p.pair_z_index = {0};
  p.residual = [](const VecX&, VecX&, VecX& w) { w[0] = -1.0; };
  SolverConfig cfg;
  cfg.max_iterations = 30;
  cfg.max_restarts = 2;
  const auto sol = solve(p, VecX::Zero(1), cfg);
  CHECK(sol.status != SolveStatus::Converged);
}
