#ifndef RTOKIT_PROBLEM_HPP
#define RTOKIT_PROBLEM_HPP

#include <Eigen/Dense>
#include <memory>

#include "rto/forward_model.hpp"
#include "rto/operators.hpp"

namespace rto {

/// Bayesian inverse problem y = F(u) + noise with Gaussian prior
/// N(prior_mean, S_pr S_pr^T) and Gaussian noise N(0, S_obs S_obs^T).
struct BayesProblem {
  std::shared_ptr<const ForwardModel> forward;
  VectorXd data;                                        // y
  VectorXd prior_mean;                                  // m_pr
  std::shared_ptr<const CovarianceFactor> prior_factor; // S_pr
  std::shared_ptr<const CovarianceFactor> obs_factor;   // S_obs

  void validate() const;
};

/// The problem after the affine change of variables that makes the prior and
/// noise covariances the identity and moves the data to the origin:
///   G(v) = S_obs^{-1} (F(S_pr v + m_pr) - y),  v ~ N(0, I).
/// The negative log target is  1/2 ||H(v)||^2  with  H(v) = (v, G(v)).
///
/// All methods are const and the object is safely shareable across threads.
class WhitenedProblem {
 public:
  explicit WhitenedProblem(BayesProblem problem);

  Index n() const { return n_; }  // parameter dimension
  Index m() const { return m_; }  // data dimension

  VectorXd G(const VectorXd& v) const;
  VectorXd jvp_G(const VectorXd& v, const VectorXd& dv) const;
  VectorXd vjp_G(const VectorXd& v, const VectorXd& dy) const;

  /// Stacked map (v, G(v)). The first n entries are the input, bit for bit.
  VectorXd H(const VectorXd& v) const;
  /// (dv, dG(v) dv)
  VectorXd jvp_H(const VectorXd& v, const VectorXd& dv) const;
  /// dy_head + dG(v)^T dy_tail
  VectorXd vjp_H(const VectorXd& v, const VectorXd& dy) const;

  /// Unnormalized log target, -1/2 ||H(v)||^2.
  double log_target(const VectorXd& v) const;

  /// Back to the original coordinates, u = S_pr v + m_pr.
  VectorXd unwhiten(const VectorXd& v) const;
  /// v = S_pr^{-1} (u - m_pr); inverse of unwhiten.
  VectorXd whiten_point(const VectorXd& u) const;

  const BayesProblem& problem() const { return problem_; }

 private:
  BayesProblem problem_;
  Index n_ = 0;
  Index m_ = 0;
};

/// Whitening change of variables. Throws FactorizationError if a factor is
/// singular and std::invalid_argument on inconsistent dimensions.
WhitenedProblem whiten(BayesProblem problem);

}  // namespace rto

#endif
