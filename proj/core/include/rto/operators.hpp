#ifndef RTOKIT_OPERATORS_HPP
#define RTOKIT_OPERATORS_HPP

#include <Eigen/Dense>
#include <memory>

#include "rto/errors.hpp"

namespace rto {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Square factor S of a covariance, S S^T = Gamma, exposed through its
/// forward and inverse actions. Large-scale priors are often specified by
/// S^{-1} directly, so nothing here ever forms S or Gamma densely.
class CovarianceFactor {
 public:
  virtual ~CovarianceFactor() = default;

  virtual Index dim() const = 0;
  virtual VectorXd apply(const VectorXd& x) const = 0;             // S x
  virtual VectorXd apply_transpose(const VectorXd& x) const = 0;   // S^T x
  virtual VectorXd solve(const VectorXd& b) const = 0;             // S^{-1} b
  virtual VectorXd solve_transpose(const VectorXd& b) const = 0;   // S^{-T} b
};

/// Factor stored as a dense square matrix.
class DenseFactor final : public CovarianceFactor {
 public:
  explicit DenseFactor(MatrixXd s);

  /// Symmetric triangular (Cholesky) factor of an SPD covariance.
  static std::shared_ptr<DenseFactor> from_covariance(const MatrixXd& gamma);

  Index dim() const override { return s_.rows(); }
  VectorXd apply(const VectorXd& x) const override { return s_ * x; }
  VectorXd apply_transpose(const VectorXd& x) const override { return s_.transpose() * x; }
  VectorXd solve(const VectorXd& b) const override;
  VectorXd solve_transpose(const VectorXd& b) const override;

  const MatrixXd& matrix() const { return s_; }

 private:
  MatrixXd s_;
  Eigen::PartialPivLU<MatrixXd> lu_;
};

/// S = c * I. The usual observation factor for iid noise with std dev c.
class ScaledIdentityFactor final : public CovarianceFactor {
 public:
  ScaledIdentityFactor(Index n, double scale) : n_(n), scale_(scale) {
    if (scale_ == 0.0) throw FactorizationError("scaled identity factor: zero scale is singular");
  }

  Index dim() const override { return n_; }
  VectorXd apply(const VectorXd& x) const override { return scale_ * x; }
  VectorXd apply_transpose(const VectorXd& x) const override { return scale_ * x; }
  VectorXd solve(const VectorXd& b) const override { return b / scale_; }
  VectorXd solve_transpose(const VectorXd& b) const override { return b / scale_; }

 private:
  Index n_;
  double scale_;
};

}  // namespace rto

#endif
