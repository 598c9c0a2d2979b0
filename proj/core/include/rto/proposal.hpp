#ifndef RTOKIT_PROPOSAL_HPP
#define RTOKIT_PROPOSAL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "rto/optimizer.hpp"
#include "rto/problem.hpp"

namespace rto {

/// Orthonormal basis of range(dH(v_ref)) from a thin QR factorization.
/// Dense, (n+m) x n; the reference implementation path.
struct QrBasis {
  MatrixXd q;
  VectorXd v_ref;
};

/// Reduced SVD of the linearized whitened forward map, dG(v_ref) ~ Psi
/// diag(lambda) Phi^T, truncated at singular value `threshold`. Implicitly
/// represents the orthonormal polar factor of dH(v_ref) without storing any
/// (n+m) x n matrix, which is what makes the per-sample cost linear in n.
struct SvdBasis {
  MatrixXd psi;      // m x r, orthonormal columns
  VectorXd lambda;   // r singular values, descending, all > threshold
  MatrixXd phi;      // n x r, orthonormal columns
  double threshold = 0.0;
  VectorXd v_ref;

  Index rank() const { return lambda.size(); }
  /// Keep only singular values above a (larger) threshold.
  SvdBasis truncated(double new_threshold) const;
};

struct Proposal {
  VectorXd v;
  double log_weight = -std::numeric_limits<double>::infinity();
  bool valid = false;
  SolveReport solve_report;
  VectorXd noise;  // the Gaussian draw that produced this proposal
};

/// Default optimizer settings for proposal solves: zero-residual systems.
SolveOptions default_proposal_options();
/// Default optimizer settings for the reference-point (mode) solve.
SolveOptions default_reference_options();

/// Mode of the whitened target from a zero start: argmin 1/2 ||H(v)||^2.
/// Throws ReferencePointError if the optimizer does not converge.
VectorXd find_reference(const WhitenedProblem& wp,
                        const SolveOptions& opts = default_reference_options());

/// Dense thin-QR basis; O((n+m) n^2) setup. Throws FactorizationError if
/// dH(v_ref) is rank deficient.
QrBasis build_qr_basis(const WhitenedProblem& wp, const VectorXd& v_ref);

struct SvdOptions {
  // Assemble dG densely (n jvp calls) up to this dimension, otherwise run
  // Golub-Kahan bidiagonalization with full reorthogonalization.
  Index dense_limit = 2048;
  bool force_iterative = false;
};

/// SVD basis at truncation threshold tau; tau = 0 keeps the full numerical
/// rank. A threshold above the largest singular value yields rank 0 and the
/// proposal falls back to the prior.
SvdBasis build_svd_basis(const WhitenedProblem& wp, const VectorXd& v_ref, double tau,
                         const SvdOptions& opts = {});

/// Standard RTO proposal: solve Q^T H(v) = Q^T eta, eta ~ N(0, I_{n+m}).
Proposal propose_standard(const WhitenedProblem& wp, const QrBasis& basis,
                          const VectorXd& eta,
                          const SolveOptions& opts = default_proposal_options());

/// log w(v) = -log|det(Q^T dH(v))| - 1/2||H(v)||^2 + 1/2||Q^T H(v)||^2.
/// Returns -inf when the determinant vanishes.
double weight_standard(const WhitenedProblem& wp, const QrBasis& basis, const VectorXd& v);

/// Scalable RTO proposal: split xi into the complement of range(Phi), copied
/// through unchanged, plus an r-dimensional nonlinear solve.
Proposal propose_scalable(const WhitenedProblem& wp, const SvdBasis& basis,
                          const VectorXd& xi,
                          const SolveOptions& opts = default_proposal_options());

/// Same weight expressed through the SVD factors; all operations are O(n r).
double weight_scalable(const WhitenedProblem& wp, const SvdBasis& basis, const VectorXd& v);

/// Action of the reduced residual linearization,
///   (Lambda^2 + I)^{-1/2} (I + Lambda Psi^T dG(v) Phi) dvr.
VectorXd reduced_jacobian_action(const WhitenedProblem& wp, const SvdBasis& basis,
                                 const VectorXd& v, const VectorXd& dvr);
/// Adjoint of reduced_jacobian_action.
VectorXd reduced_jacobian_adjoint(const WhitenedProblem& wp, const SvdBasis& basis,
                                  const VectorXd& v, const VectorXd& dr);

/// Normalized log proposal density (the pushforward of N(0, I_n) through the
/// inverse transport map), evaluated at v.
double log_proposal_density(const WhitenedProblem& wp, const QrBasis& basis,
                            const VectorXd& v);
double log_proposal_density(const WhitenedProblem& wp, const SvdBasis& basis,
                            const VectorXd& v);

/// Draw `count` proposals in parallel. Proposal i consumes only RNG substream
/// i of `seed`, so the result is identical for any worker count.
std::vector<Proposal> sample_proposals(const WhitenedProblem& wp, const QrBasis& basis,
                                       int count, uint64_t seed, int workers = 1,
                                       const SolveOptions& opts = default_proposal_options());
std::vector<Proposal> sample_proposals(const WhitenedProblem& wp, const SvdBasis& basis,
                                       int count, uint64_t seed, int workers = 1,
                                       const SolveOptions& opts = default_proposal_options());

}  // namespace rto

#endif
