#ifndef RTOKIT_MODELS_HPP
#define RTOKIT_MODELS_HPP

#include <Eigen/Dense>
#include <memory>

#include "rto/forward_model.hpp"
#include "rto/problem.hpp"

namespace rto {

/// F(x) = A x.
class LinearModel final : public ForwardModel {
 public:
  explicit LinearModel(MatrixXd a) : a_(std::move(a)) {}

  Index input_dim() const override { return a_.cols(); }
  Index output_dim() const override { return a_.rows(); }
  VectorXd eval(const VectorXd& x) const override { return a_ * x; }
  VectorXd jvp(const VectorXd&, const VectorXd& dx) const override { return a_ * dx; }
  VectorXd vjp(const VectorXd&, const VectorXd& dy) const override {
    return a_.transpose() * dy;
  }

  const MatrixXd& matrix() const { return a_; }

 private:
  MatrixXd a_;
};

std::shared_ptr<const ForwardModel> linear_model(MatrixXd a);

/// Fixed weakly nonlinear map R^2 -> R^2,
///   F(v) = 0.8 * (v1 + 0.4 v2^2,  v2 + 0.4 v1^2).
/// Smooth, with exact derivative actions; mild enough that the least-squares
/// Gauss-Newton systems stay invertible on the region the samplers visit.
class Toy2dModel final : public ForwardModel {
 public:
  Index input_dim() const override { return 2; }
  Index output_dim() const override { return 2; }
  VectorXd eval(const VectorXd& v) const override;
  VectorXd jvp(const VectorXd& v, const VectorXd& dv) const override;
  VectorXd vjp(const VectorXd& v, const VectorXd& dy) const override;
  Eigen::Matrix2d jacobian(const VectorXd& v) const;
};

std::shared_ptr<const ForwardModel> toy2d_model();

VectorXd toy2d_default_data();

/// Canonical 2D toy inverse problem: standard normal prior, iid noise of
/// standard deviation sigma, fixed synthetic data. The default sigma keeps
/// the least-squares transport injective over [-6,6]^2 (checked by
/// quadrature), which the density-grid diagnostics rely on; smaller sigma
/// makes the map fold far from the mode.
BayesProblem toy2d_problem(double sigma = 1.5, const VectorXd& data = toy2d_default_data());

/// Linear-Gaussian problem with a randomly drawn forward matrix and data;
/// convenient for exactness tests. Deterministic in the seed.
BayesProblem random_linear_problem(Index n, Index m, uint64_t seed);

}  // namespace rto

#endif
