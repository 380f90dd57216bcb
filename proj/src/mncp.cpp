#include "patchsim/mncp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <limits>

#include "patchsim/rng.hpp"

namespace patchsim {

double fischer_burmeister(double a, double b) {
  return a + b - std::sqrt(a * a + b * b);
}

VecX assemble_fb_residual(const MncpProblem& problem, const VecX& x) {
  if (x.size() != problem.dimension) {
    throw ValidationError("unknown vector dimension mismatch");
  }
  VecX eq(problem.num_equalities);
  VecX w(problem.num_pairs());
  problem.residual(x, eq, w);

  VecX out(problem.num_equalities + problem.num_pairs());
  out.head(problem.num_equalities) = eq;
  for (int i = 0; i < problem.num_pairs(); ++i) {
    out[problem.num_equalities + i] = fischer_burmeister(w[i], x[problem.pair_z_index[i]]);
  }
  return out;
}

namespace {

double max_norm(const VecX& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Pair z-variables are nonnegative at any solution; iterates are kept on
/// that side so the search never explores the wrong-sign kink valleys.
void clamp_pair_vars(const MncpProblem& problem, VecX& x) {
  for (const int zi : problem.pair_z_index) x[zi] = std::max(x[zi], 0.0);
}

/// Least-squares Newton direction min ‖J d + F‖² + λ²‖d‖² via a stacked QR;
/// the damping keeps rank-deficient Jacobians usable (solution manifolds are
/// expected, not exceptional, in this problem class).
VecX damped_direction(const MatX& jac, const VecX& residual, double lambda) {
  const int n = static_cast<int>(jac.cols());
  MatX stacked(jac.rows() + n, n);
  stacked.topRows(jac.rows()) = jac;
  stacked.bottomRows(n) = lambda * MatX::Identity(n, n);
  VecX rhs = VecX::Zero(jac.rows() + n);
  rhs.head(jac.rows()) = -residual;
  return stacked.householderQr().solve(rhs);
}

/// Smooth Newton refinement on a frozen active set: each pair contributes
/// either w_i(x) = 0 or x[z_i] = 0.  Pairs whose free side comes out negative
/// flip their branch and the solve repeats.  Returns true when the exact FB
/// residual meets the tolerance.
bool active_set_polish(const MncpProblem& problem, VecX& x, const SolverConfig& config) {
  const int n = problem.dimension;
  const int np = problem.num_pairs();
  VecX eq0(problem.num_equalities), w0(np);
  problem.residual(x, eq0, w0);
  std::vector<bool> constraint_active(np);
  for (int i = 0; i < np; ++i) {
    const double z = x[problem.pair_z_index[i]];
    // Degenerate pairs (both sides near zero) pin the variable: that row is
    // linear, whereas w often kinks exactly at such corners.
    constraint_active[i] = z > w0[i] && std::max(std::abs(z), std::abs(w0[i])) > 1e-6;
  }

  auto branch_residual = [&](const VecX& xx) -> VecX {
    VecX e(problem.num_equalities), ww(np);
    problem.residual(xx, e, ww);
    VecX out(problem.num_equalities + np);
    out.head(problem.num_equalities) = e;
    for (int i = 0; i < np; ++i) {
      out[problem.num_equalities + i] = constraint_active[i] ? ww[i] : xx[problem.pair_z_index[i]];
    }
    return out;
  };

  // Overshoot the requested tolerance; callers divide position-level
  // residuals by the step size, which costs about two digits.
  const double target = std::max(0.02 * config.tolerance, 2e-13);

  for (int round = 0; round < 5; ++round) {
    VecX xp = x;
    VecX f = branch_residual(xp);
    double lambda_rel = 1e-9;
    for (int it = 0; it < 40 && max_norm(f) > target; ++it) {
      if (!f.allFinite()) return false;
      MatX jac(f.size(), n);
      for (int j = 0; j < n; ++j) {
        const double delta = config.fd_step * std::max(1.0, std::abs(xp[j]));
        VecX xj = xp;
        xj[j] += delta;
        const VecX fj = branch_residual(xj);
        if (!fj.allFinite()) return false;
        jac.col(j) = (fj - f) / delta;
      }
      const VecX grad = jac.transpose() * f;
      const double merit = 0.5 * f.squaredNorm();
      bool accepted = false;
      for (int lm = 0; lm < 8 && !accepted; ++lm) {
        const VecX d = damped_direction(jac, f, std::max(lambda_rel * jac.norm(), 1e-300));
        const double slope = grad.dot(d);
        if (d.allFinite() && slope < 0.0) {
          double step = 1.0;
          for (int ls = 0; ls < 30 && !accepted; ++ls) {
            VecX xn = xp + step * d;
            clamp_pair_vars(problem, xn);
            const VecX fn = branch_residual(xn);
            if (fn.allFinite() &&
                0.5 * fn.squaredNorm() <= merit + config.sufficient_decrease * step * slope) {
              xp = xn;
              f = fn;
              accepted = true;
            } else {
              step *= config.line_search_contraction;
            }
          }
        }
        if (!accepted) lambda_rel = std::min(lambda_rel * 100.0, 1e6);
      }
      if (!accepted) break;
      lambda_rel = std::max(lambda_rel * 0.25, 1e-12);
    }

    const VecX fb = assemble_fb_residual(problem, xp);
    if (config.verbose) {
      std::fprintf(stderr, "  [polish] round %d branch-norm %.3e fb-norm %.3e\n", round,
                   max_norm(f), fb.allFinite() ? max_norm(fb) : -1.0);
    }
    if (fb.allFinite() && max_norm(fb) <= config.tolerance) {
      x = xp;
      return true;
    }
    if (!f.allFinite() || max_norm(f) > target) return false;  // branch solve itself failed

    // The branch root violates a sign condition; flip the offenders.
    VecX e(problem.num_equalities), ww(np);
    problem.residual(xp, e, ww);
    bool flipped = false;
    for (int i = 0; i < np; ++i) {
      const double z = xp[problem.pair_z_index[i]];
      if (constraint_active[i] && z < -0.25 * config.tolerance) {
        constraint_active[i] = false;
        flipped = true;
      } else if (!constraint_active[i] && ww[i] < -0.25 * config.tolerance) {
        constraint_active[i] = true;
        flipped = true;
      }
    }
    if (!flipped) return false;
    x = xp;  // continue from the branch root
  }
  return false;
}

}  // namespace

MncpSolution solve(const MncpProblem& problem, const VecX& x0, const SolverConfig& config) {
  const int n = problem.dimension;
  if (x0.size() != n) throw ValidationError("x0 dimension mismatch");

  if (problem.num_equalities + problem.num_pairs() < n) {
    throw ValidationError("underdetermined problem: fewer residual rows than unknowns");
  }

  Rng rng(config.seed);
  MncpSolution best;
  best.x = x0;
  best.residual_norm = std::numeric_limits<double>::infinity();
  bool saw_singular = false;
  int total_iterations = 0;

  for (int restart = 0; restart <= config.max_restarts; ++restart) {
    VecX x = x0;
    if (restart > 0) {
      best.restarts_used = restart;
      for (int i = 0; i < n; ++i) {
        x[i] += config.restart_perturbation * std::max(1.0, std::abs(x0[i])) * rng.normal();
      }
      clamp_pair_vars(problem, x);
    }

    double fd = config.fd_step;
    bool fd_halved = false;
    double lambda_rel = 1e-8;  // Levenberg damping relative to ‖J‖
    int polish_attempts = 0;
    int last_polish_iter = -100;
    VecX f = assemble_fb_residual(problem, x);
    double norm = max_norm(f);

    for (int it = 0; it < config.max_iterations; ++it) {
      if (!f.allFinite()) break;
      if (norm < best.residual_norm) {
        best.residual_norm = norm;
        best.x = x;
      }
      if (norm <= config.tolerance) {
        best.x = x;
        best.residual_norm = norm;
        best.iterations = total_iterations;
        best.status = SolveStatus::Converged;
        return best;
      }

      // The FB iteration crawls through degenerate complementarity corners;
      // once close, a smooth solve on the identified active set finishes.
      if (norm <= 1e-2 && polish_attempts < 6 && it - last_polish_iter >= 8) {
        ++polish_attempts;
        last_polish_iter = it;
        VecX xp = x;
        if (active_set_polish(problem, xp, config)) {
          best.x = xp;
          best.residual_norm = max_norm(assemble_fb_residual(problem, xp));
          best.iterations = total_iterations;
          best.status = SolveStatus::Converged;
          return best;
        }
      }

      ++total_iterations;
      MatX jac(f.size(), n);
      bool jac_ok = true;
      for (int j = 0; j < n; ++j) {
        const double delta = fd * std::max(1.0, std::abs(x[j]));
        VecX xj = x;
        xj[j] += delta;
        const VecX fj = assemble_fb_residual(problem, xj);
        if (!fj.allFinite()) {
          jac_ok = false;
          break;
        }
        jac.col(j) = (fj - f) / delta;
      }
      if (!jac_ok) break;

      const double jac_norm = jac.norm();
      const VecX grad = jac.transpose() * f;
      const double merit = 0.5 * f.squaredNorm();

      // Levenberg loop: grow the damping until a backtracked step decreases
      // the merit, shrink it again after successes.
      bool accepted = false;
      for (int lm = 0; lm < 10 && !accepted; ++lm) {
        const VecX d = damped_direction(jac, f, std::max(lambda_rel * jac_norm, 1e-300));
        if (!d.allFinite()) {
          saw_singular = true;
          lambda_rel = std::min(lambda_rel * 100.0, 1e6);
          continue;
        }
        const double slope = grad.dot(d);
        if (slope >= 0.0) {
          lambda_rel = std::min(lambda_rel * 100.0, 1e6);
          continue;
        }
        double step = 1.0;
        for (int ls = 0; ls < 40 && !accepted; ++ls) {
          VecX xn = x + step * d;
          clamp_pair_vars(problem, xn);
          const VecX fn = assemble_fb_residual(problem, xn);
          if (fn.allFinite() &&
              0.5 * fn.squaredNorm() <= merit + config.sufficient_decrease * step * slope) {
            x = xn;
            f = fn;
            norm = max_norm(f);
            accepted = true;
          } else {
            step *= config.line_search_contraction;
          }
        }
        if (accepted) {
          // A full step means the local model is trustworthy; a truncated one
          // means the direction overshoots and needs more damping.
          if (step >= 0.99) {
            lambda_rel = std::max(lambda_rel * 0.25, 1e-12);
          } else if (step < 0.25) {
            lambda_rel = std::min(lambda_rel * 10.0, 1e6);
          }
        } else {
          lambda_rel = std::min(lambda_rel * 100.0, 1e6);
        }
        if (config.verbose) {
          std::fprintf(stderr,
                       "  [mncp] restart %d iter %d norm %.3e %s |d|=%.3e slope %.3e lam %.1e\n",
                       restart, it, norm, accepted ? "ok" : "FAIL", d.norm(), slope, lambda_rel);
        }
      }
      if (!accepted) {
        if (!fd_halved) {
          fd *= 0.5;
          fd_halved = true;
          continue;
        }
        break;  // stagnated; try the next restart
      }
    }

    if (norm < best.residual_norm && f.allFinite()) {
      best.residual_norm = norm;
      best.x = x;
    }
  }

  best.iterations = total_iterations;
  best.status = (saw_singular && !std::isfinite(best.residual_norm)) ? SolveStatus::SingularJacobian
                                                                     : SolveStatus::MaxIterations;
  return best;
}

}  // namespace patchsim
