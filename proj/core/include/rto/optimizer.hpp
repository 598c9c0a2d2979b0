#ifndef RTOKIT_OPTIMIZER_HPP
#define RTOKIT_OPTIMIZER_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace rto {

using Eigen::Index;
using Eigen::VectorXd;

/// Nonlinear least-squares problem min_x 1/2 ||residual(x)||^2 described by
/// callbacks only; the Jacobian is never formed.
struct ResidualProblem {
  std::function<VectorXd(const VectorXd&)> residual;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> jvp;  // J(x) dx
  std::function<VectorXd(const VectorXd&, const VectorXd&)> vjp;  // J(x)^T dr
  VectorXd start;
};

struct SolveOptions {
  double ftol = 1e-6;       // stop when the objective change (or the objective) drops below this
  double gtol = 0.0;        // stop when ||J^T r|| <= gtol; 0 disables
  int max_iters = 500;
  double cg_tol = 1e-10;    // relative tolerance of the inner normal-equation CG
  int cg_max_iters = 0;     // 0: use 2*dim + 10
  // When set, "converged" additionally requires objective <= ftol. Used for
  // square nonlinear systems whose exact solution has zero residual.
  bool require_zero_residual = false;
  double divergence_factor = 1e12;
};

enum class Termination {
  ConvergedFtol,          // objective change below ftol
  ConvergedZeroResidual,  // objective itself below ftol
  ConvergedGtol,          // gradient norm below gtol
  Stalled,                // no meaningful progress but residual not zero (zero-residual mode)
  MaxIters,
  Diverged,
  NonFiniteResidual,
};

std::string to_string(Termination t);

struct SolveReport {
  VectorXd solution;
  double objective = 0.0;       // 1/2 ||r||^2 at solution
  double gradient_norm = 0.0;   // ||J^T r|| at solution
  int iterations = 0;           // LM trial steps (accepted or rejected)
  long residual_evals = 0;
  long jvp_evals = 0;
  long vjp_evals = 0;
  bool converged = false;
  Termination reason = Termination::MaxIters;
};

/// Levenberg-Marquardt with conjugate-gradient normal-equation steps. Only
/// jvp/vjp actions are used, so the cost per iteration is a handful of model
/// derivative actions regardless of dimension.
SolveReport solve_nlls(const ResidualProblem& prob, const SolveOptions& opts = {});

}  // namespace rto

#endif
