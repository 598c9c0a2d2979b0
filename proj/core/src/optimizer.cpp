#include "rto/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rto {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::ConvergedFtol: return "converged: objective change below ftol";
    case Termination::ConvergedZeroResidual: return "converged: zero residual";
    case Termination::ConvergedGtol: return "converged: gradient below gtol";
    case Termination::Stalled: return "stalled: no progress with nonzero residual";
    case Termination::MaxIters: return "max iterations exceeded";
    case Termination::Diverged: return "diverged: objective grew past guard";
    case Termination::NonFiniteResidual: return "aborted: non-finite residual";
  }
  return "unknown";
}

namespace {

struct Counters {
  long residual = 0, jvp = 0, vjp = 0;
};

// CG on (J^T J + lambda I) delta = -g. Returns false if the iteration broke
// down (non-finite numbers), in which case the caller damps and retries.
bool cg_normal_step(const ResidualProblem& prob, const VectorXd& x, const VectorXd& g,
                    double lambda, double rel_tol, int max_iters, Counters& count,
                    VectorXd& delta) {
  const Index d = x.size();
  delta.setZero(d);
  VectorXd resid = -g;  // CG residual, equals rhs at delta = 0
  VectorXd p = resid;
  double rr = resid.squaredNorm();
  const double stop = rel_tol * rel_tol * rr;
  if (rr == 0.0) return true;

  for (int k = 0; k < max_iters; ++k) {
    VectorXd jp = prob.jvp(x, p);
    ++count.jvp;
    VectorXd ap = prob.vjp(x, jp);
    ++count.vjp;
    ap += lambda * p;
    const double pap = p.dot(ap);
    if (!std::isfinite(pap) || pap <= 0.0) {
      // Curvature breakdown: fall back to whatever progress was made, or the
      // steepest-descent direction on the first iteration.
      if (k == 0) delta = resid;
      return delta.allFinite();
    }
    const double alpha = rr / pap;
    delta += alpha * p;
    resid -= alpha * ap;
    const double rr_next = resid.squaredNorm();
    if (!std::isfinite(rr_next)) return false;
    if (rr_next <= stop) break;
    p = resid + (rr_next / rr) * p;
    rr = rr_next;
  }
  return delta.allFinite();
}

}  // namespace

SolveReport solve_nlls(const ResidualProblem& prob, const SolveOptions& opts) {
  SolveReport report;
  Counters count;
  const Index d = prob.start.size();
  const int cg_max = opts.cg_max_iters > 0 ? opts.cg_max_iters
                                           : static_cast<int>(2 * d + 10);

  VectorXd x = prob.start;
  VectorXd r = prob.residual(x);
  ++count.residual;

  auto finish = [&](bool converged, Termination reason) {
    report.solution = x;
    report.converged = converged;
    report.reason = reason;
    report.residual_evals = count.residual;
    report.jvp_evals = count.jvp;
    report.vjp_evals = count.vjp;
    return report;
  };

  if (!r.allFinite()) {
    report.objective = std::numeric_limits<double>::quiet_NaN();
    return finish(false, Termination::NonFiniteResidual);
  }

  double phi = 0.5 * r.squaredNorm();
  const double phi_init = phi;
  VectorXd g = prob.vjp(x, r);
  ++count.vjp;
  report.objective = phi;
  report.gradient_norm = g.norm();

  double lambda = 0.0;
  double nu = 4.0;
  int stall_streak = 0;
  int reject_streak = 0;
  VectorXd delta(d);

  bool done = false;
  bool converged = false;
  Termination reason = Termination::MaxIters;
  auto stop = [&](bool c, Termination t) {
    converged = c;
    reason = t;
    done = true;
  };

  while (!done) {
    if (phi <= opts.ftol) {
      stop(true, Termination::ConvergedZeroResidual);
      break;
    }
    if (opts.gtol > 0.0 && report.gradient_norm <= opts.gtol) {
      stop(true, Termination::ConvergedGtol);
      break;
    }
    if (report.iterations >= opts.max_iters) {
      stop(false, Termination::MaxIters);
      break;
    }

    ++report.iterations;
    const bool ok = cg_normal_step(prob, x, g, lambda, opts.cg_tol, cg_max, count, delta);

    // A vanishing undamped Gauss-Newton step means the iterate is numerically
    // stationary; nothing below can improve it.
    if (ok && lambda <= 1e-6 && delta.norm() <= 1e-10 * (x.norm() + 1e-10)) {
      if (!opts.require_zero_residual)
        stop(true, Termination::ConvergedFtol);
      else
        stop(false, Termination::Stalled);
      break;
    }

    bool accepted = false;
    double phi_trial = std::numeric_limits<double>::infinity();
    VectorXd r_trial;
    if (ok) {
      const VectorXd x_trial = x + delta;
      r_trial = prob.residual(x_trial);
      ++count.residual;
      if (r_trial.allFinite()) {
        phi_trial = 0.5 * r_trial.squaredNorm();
        if (phi_trial < phi) {
          accepted = true;
          x = x_trial;
        }
      }
    }

    if (accepted) {
      reject_streak = 0;
      const double drop = phi - phi_trial;
      phi = phi_trial;
      r = std::move(r_trial);
      g = prob.vjp(x, r);
      ++count.vjp;
      report.objective = phi;
      report.gradient_norm = g.norm();
      lambda = (lambda > 1e-12) ? lambda / 3.0 : 0.0;
      nu = 4.0;

      if (phi <= opts.ftol) {
        stop(true, Termination::ConvergedZeroResidual);
        break;
      }
      if (drop < opts.ftol) {
        if (!opts.require_zero_residual) {
          stop(true, Termination::ConvergedFtol);
          break;
        }
        // Zero-residual mode: absolute progress is below ftol but the
        // residual has not vanished. Only give up once relative progress
        // dies too, otherwise a slow geometric tail would be misread as
        // unsolvable.
        if (drop <= 1e-2 * phi) {
          if (++stall_streak >= 8) {
            stop(false, Termination::Stalled);
            break;
          }
        } else {
          stall_streak = 0;
        }
      } else {
        stall_streak = 0;
      }
      if (phi > opts.divergence_factor * std::max(phi_init, 1e-300)) {
        stop(false, Termination::Diverged);
        break;
      }
    } else {
      lambda = std::max(lambda * nu, 1e-4);
      nu = std::min(nu * 2.0, 1e8);
      if (++reject_streak >= 40 || lambda > 1e18) {
        // No step length improves the objective: the decrease available near
        // a stationary point is below what doubles can resolve.
        if (!opts.require_zero_residual)
          stop(true, Termination::ConvergedFtol);
        else
          stop(false, Termination::Stalled);
        break;
      }
    }
  }

  // Gradient polish: objective-comparison acceptance cannot resolve decreases
  // below ~eps*phi, which floors the gradient near sqrt(eps * phi). When a
  // gradient tolerance is requested, drive it down directly with undamped
  // Gauss-Newton steps accepted by gradient decrease.
  if (opts.gtol > 0.0 && converged && report.gradient_norm > opts.gtol && r.allFinite()) {
    for (int k = 0; k < 20 && report.gradient_norm > opts.gtol; ++k) {
      if (!cg_normal_step(prob, x, g, 0.0, opts.cg_tol, cg_max, count, delta)) break;
      const VectorXd x_trial = x + delta;
      const VectorXd r_trial = prob.residual(x_trial);
      ++count.residual;
      if (!r_trial.allFinite()) break;
      const VectorXd g_trial = prob.vjp(x_trial, r_trial);
      ++count.vjp;
      if (!g_trial.allFinite() || g_trial.norm() >= report.gradient_norm) break;
      x = x_trial;
      r = r_trial;
      g = g_trial;
      phi = 0.5 * r.squaredNorm();
      report.objective = phi;
      report.gradient_norm = g.norm();
    }
    if (report.gradient_norm <= opts.gtol) reason = Termination::ConvergedGtol;
  }

  return finish(converged, reason);
}

}  // namespace rto
