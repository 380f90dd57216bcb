#pragma once

#include <functional>
#include <string>
#include <vector>

#include "patchsim/geom.hpp"

namespace patchsim {

/// Named slice of the unknown vector, for diagnostics and tests.
struct VariableSlice {
  std::string name;
  int offset = 0;
  int size = 0;
};

/// Mixed nonlinear complementarity problem: find x with g(x) = 0 and
/// 0 <= w_i(x) ⟂ x[z_i] >= 0 for every pair i.  The residual callback fills
/// the equality vector and the w values; each pair's z is a component of x.
struct MncpProblem {
  int dimension = 0;
  int num_equalities = 0;
  std::vector<int> pair_z_index;
  std::function<void(const VecX& x, VecX& equalities, VecX& pair_w)> residual;
  std::vector<VariableSlice> layout;

  int num_pairs() const { return static_cast<int>(pair_z_index.size()); }
};

struct SolverConfig {
  double tolerance = 1e-10;          // on the max-norm of the FB residual
  int max_iterations = 200;          // Newton iterations per attempt
  double line_search_contraction = 0.5;
  double sufficient_decrease = 1e-4;
  int max_restarts = 10;
  double fd_step = 1e-7;             // relative forward-difference step
  double restart_perturbation = 1e-2;
  uint64_t seed = 0;
  bool verbose = false;  // per-iteration diagnostics on stderr
};

enum class SolveStatus { Converged, MaxIterations, SingularJacobian };

struct MncpSolution {
  VecX x;
  double residual_norm = 0.0;
  int iterations = 0;
  int restarts_used = 0;
  SolveStatus status = SolveStatus::MaxIterations;
};

/// a + b - sqrt(a² + b²); zero iff a >= 0, b >= 0, a·b = 0.
double fischer_burmeister(double a, double b);

/// Equality rows verbatim, each complementarity pair replaced by its
/// Fischer-Burmeister value.  A root of this map solves the MNCP.
VecX assemble_fb_residual(const MncpProblem& problem, const VecX& x);

/// Damped semismooth Newton on the FB residual with forward-difference
/// Jacobians, Tikhonov-regularized least-squares directions, backtracking
/// line search, and randomized restarts from x0.  Non-convergence is a
/// status, not an exception.
MncpSolution solve(const MncpProblem& problem, const VecX& x0, const SolverConfig& config = {});

}  // namespace patchsim
