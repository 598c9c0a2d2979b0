#ifndef RTOKIT_ELLIPTIC_HPP
#define RTOKIT_ELLIPTIC_HPP

#include <Eigen/Dense>
#include <memory>

#include "rto/forward_model.hpp"
#include "rto/operators.hpp"
#include "rto/problem.hpp"

namespace rto {

/// Prior factor for the 1D log-diffusivity field. The inverse factor is the
/// scaled first-difference stencil
///   S^{-1} = sqrt(n) * [ sqrt(n) 0 ... 0 sqrt(n); -1 1; ... ; -1 1 ],
/// a Laplace-like precision square root. Both the forward action (one
/// cumulative-sum solve) and the inverse action (one sparse multiply) run in
/// O(n); neither forms a matrix.
class EllipticPriorFactor final : public CovarianceFactor {
 public:
  explicit EllipticPriorFactor(Index n);

  Index dim() const override { return n_; }
  VectorXd apply(const VectorXd& x) const override;            // S x
  VectorXd apply_transpose(const VectorXd& x) const override;  // S^T x
  VectorXd solve(const VectorXd& b) const override;            // S^{-1} b
  VectorXd solve_transpose(const VectorXd& b) const override;  // S^{-T} b

 private:
  Index n_;
  double root_n_;
};

/// Stationary diffusion  -(kappa p')' = f  on (0,1) with a unit influx at the
/// left boundary, kappa(0) p'(0) = -1, and p(1) = 1. Discretized with the
/// three-point central stencil on a uniform n-point grid; the flux boundary
/// row uses a half-cell balance so the scheme stays second order. The field
/// is parameterized as kappa = 1.5 exp(u) + 0.1, and the model maps u to the
/// potential at nine equally spaced interior points. Forward, Jacobian and
/// adjoint actions each cost one tridiagonal solve, O(n).
class Elliptic1dModel final : public ForwardModel {
 public:
  explicit Elliptic1dModel(Index n);
  /// Same discretization with a caller-supplied source term at the nodes.
  Elliptic1dModel(Index n, VectorXd source);

  Index input_dim() const override { return n_; }
  Index output_dim() const override { return 9; }

  VectorXd eval(const VectorXd& u) const override;
  VectorXd jvp(const VectorXd& u, const VectorXd& du) const override;
  VectorXd vjp(const VectorXd& u, const VectorXd& dy) const override;

  /// Full potential field for a given log-parameter vector.
  VectorXd solve_field(const VectorXd& u) const;
  /// Potential field for an explicit diffusivity (used for data generation).
  VectorXd solve_field_kappa(const VectorXd& kappa) const;

  const std::vector<Index>& observation_indices() const { return obs_; }
  VectorXd grid() const;

 private:
  struct Tridiag {
    VectorXd sub, diag, sup;  // sub[0] and sup[n-1] unused
  };
  Tridiag assemble(const VectorXd& kappa) const;
  VectorXd rhs() const;

  Index n_;
  double h_;
  VectorXd source_;          // f at the grid nodes
  std::vector<Index> obs_;   // grid indices of the nine observation points
};

/// kappa = 1.5 exp(u) + 0.1, elementwise. Strictly above 0.1 for finite u.
VectorXd kappa_from_log(const VectorXd& u);

/// Smooth "true" diffusivity used only for synthetic data, ranging over [1,3].
VectorXd elliptic_true_kappa(const VectorXd& x);
/// Source term: two opposite-sign Gaussian bumps producing O(1) potentials.
VectorXd elliptic_source(const VectorXd& x);

/// Observations of the true field on a 151-node mesh plus N(0, sigma^2) noise.
/// The mesh is fixed and is rejected as an inversion mesh (no inverse crime).
VectorXd elliptic_generate_data(double sigma, uint64_t seed);

/// Assembled Bayesian inverse problem on an n-node mesh. Requires n-1
/// divisible by 10 (so the observation points are grid nodes) and n != 151.
BayesProblem elliptic_problem(Index n, double sigma, uint64_t data_seed);

}  // namespace rto

#endif
