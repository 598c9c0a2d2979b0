#ifndef RTOKIT_SAMPLERS_HPP
#define RTOKIT_SAMPLERS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "rto/proposal.hpp"
#include "rto/problem.hpp"

namespace rto {

/// Summed optimizer effort behind a chain's proposals.
struct CostTotals {
  long residual_evals = 0;
  long jvp_evals = 0;
  long vjp_evals = 0;
  long opt_iterations = 0;
};

/// Markov chain in whitened coordinates. Wherever accepted[k] is false,
/// states[k] equals states[k-1].
struct Chain {
  std::vector<VectorXd> states;
  std::vector<uint8_t> accepted;
  std::vector<double> log_weights;  // log-weight of the current state, per step
  uint64_t seed = 0;
  double propose_seconds = 0.0;
  double metropolize_seconds = 0.0;
  CostTotals costs;

  Index length() const { return static_cast<Index>(states.size()); }
};

/// Serial Metropolis independence pass over precomputed proposals. Uniform
/// draws are consumed in proposal-index order, so the chain is identical no
/// matter how the proposals were generated. Invalid proposals are rejected
/// unconditionally.
Chain metropolize(const std::vector<Proposal>& proposals, const VectorXd& v0,
                  double logw0, uint64_t seed);

/// Self-normalized weights: w_i = exp(lw_i - max) / sum_j exp(lw_j - max).
/// -inf entries get zero mass; throws if every entry is -inf.
VectorXd normalize_log_weights(const std::vector<double>& log_weights);

struct WeightedSamples {
  std::vector<VectorXd> samples;
  VectorXd weights;  // nonnegative, sums to one
};

/// Weighted view of a proposal batch (invalid proposals get weight zero).
WeightedSamples weighted_samples(const std::vector<Proposal>& proposals);

/// Self-normalized importance-sampling estimate of E[g].
double is_estimate(const WeightedSamples& ws, const std::function<double(const VectorXd&)>& g);

/// Preconditioned Crank-Nicolson chain on the whitened target:
///   v' = sqrt(1 - beta^2) v + beta xi, accepted with the data-misfit ratio.
/// The chain's log_weights record -1/2 ||G(v)||^2 of the current state.
Chain pcn_chain(const WhitenedProblem& wp, double beta, int steps, const VectorXd& v0,
                uint64_t seed);

// ---------------------------------------------------------------------------
// Implicit sampling (optimization-based baseline)

struct ImplicitOptions {
  int max_doublings = 60;     // ray-bracketing budget
  int max_bisections = 200;
  double level_tol = 1e-13;   // |level mismatch| target for the root
};

/// Random-map implicit sampling proposal. Given the negative log target ell
/// with minimum at v_map and a factor L with L^T L = [hess ell(v_map)]^{-1},
/// walks along the ray v_map + alpha L xi until
///   ell(v) - ell(v_map) = 1/2 ||xi||^2.
/// The log-weight is the (constant-shifted) log ratio target/proposal of the
/// ray map; for a Gaussian target it is identically zero.
Proposal implicit_propose(const std::function<double(const VectorXd&)>& ell,
                          const VectorXd& v_map,
                          const std::function<VectorXd(const VectorXd&)>& l_apply,
                          const VectorXd& xi, const ImplicitOptions& opts = {});

// ---------------------------------------------------------------------------
// Metropolized randomized maximum likelihood (augmented-space baseline)

struct RmlProposal {
  VectorXd v;
  VectorXd d;            // auxiliary data-space variable
  double log_density = 0.0;  // log proposal density of (v, d)
  bool valid = false;
  SolveReport solve_report;
};

SolveOptions default_rml_options();

/// Solve the perturbed optimality system for (v*, d*) given Gaussian draws
/// (xi_v, xi_d) and tuning parameter rho in (0,1).
RmlProposal rml_propose(const WhitenedProblem& wp, double rho, const VectorXd& xi_v,
                        const VectorXd& xi_d, const SolveOptions& opts = default_rml_options());

/// Residuals of the first-order optimality system at (v, d); both must vanish
/// at a valid proposal.
std::pair<VectorXd, VectorXd> rml_optimality_residuals(const WhitenedProblem& wp, double rho,
                                                       const VectorXd& v, const VectorXd& d,
                                                       const VectorXd& xi_v,
                                                       const VectorXd& xi_d);

/// Augmented target log-density (unnormalized) with tuning parameter gamma.
double rml_log_aug_target(const WhitenedProblem& wp, double gamma, const VectorXd& v,
                          const VectorXd& d);

/// Exact inverse of the RML transport map: the Gaussian draws that produce
/// (v, d). Needs one forward evaluation and one adjoint action.
std::pair<VectorXd, VectorXd> rml_inverse_map(const WhitenedProblem& wp, double rho,
                                              const VectorXd& v, const VectorXd& d);

/// Log proposal density of (v, d) under the RML map: the reference Gaussian
/// at the inverse image times the Jacobian of the inverse map (assembled by
/// central differences).
double rml_log_density(const WhitenedProblem& wp, double rho, const VectorXd& v,
                       const VectorXd& d);

/// Independence MH in the augmented (v, d) space; the chain's states stack v
/// and d. The v-marginal targets the original posterior.
Chain rml_metropolize(const WhitenedProblem& wp, double gamma, double rho,
                      const std::vector<RmlProposal>& proposals, const VectorXd& v0,
                      const VectorXd& d0, uint64_t seed);

}  // namespace rto

#endif
