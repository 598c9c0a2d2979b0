#include "rto/models.hpp"

#include <random>

namespace rto {

std::shared_ptr<const ForwardModel> linear_model(MatrixXd a) {
  return std::make_shared<LinearModel>(std::move(a));
}

VectorXd Toy2dModel::eval(const VectorXd& v) const {
  VectorXd out(2);
  out[0] = 0.8 * (v[0] + 0.4 * v[1] * v[1]);
  out[1] = 0.8 * (v[1] + 0.4 * v[0] * v[0]);
  return out;
}

Eigen::Matrix2d Toy2dModel::jacobian(const VectorXd& v) const {
  Eigen::Matrix2d j;
  j << 0.8, 0.64 * v[1],
       0.64 * v[0], 0.8;
  return j;
}

VectorXd Toy2dModel::jvp(const VectorXd& v, const VectorXd& dv) const {
  return jacobian(v) * dv;
}

VectorXd Toy2dModel::vjp(const VectorXd& v, const VectorXd& dy) const {
  return jacobian(v).transpose() * dy;
}

std::shared_ptr<const ForwardModel> toy2d_model() { return std::make_shared<Toy2dModel>(); }

VectorXd toy2d_default_data() {
  // F((1.1, 0.6)) rounded, i.e. data a mildly nonlinear parameter value could
  // have produced.
  VectorXd y(2);
  y << 1.0, 0.87;
  return y;
}

BayesProblem toy2d_problem(double sigma, const VectorXd& data) {
  BayesProblem p;
  p.forward = toy2d_model();
  p.data = data;
  p.prior_mean = VectorXd::Zero(2);
  p.prior_factor = std::make_shared<ScaledIdentityFactor>(2, 1.0);
  p.obs_factor = std::make_shared<ScaledIdentityFactor>(2, sigma);
  return p;
}

BayesProblem random_linear_problem(Index n, Index m, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd a(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = normal(rng);
  a /= std::sqrt(static_cast<double>(n));
  VectorXd u_true(n);
  for (Index j = 0; j < n; ++j) u_true[j] = normal(rng);
  const double sigma = 0.5;
  VectorXd y = a * u_true;
  for (Index i = 0; i < m; ++i) y[i] += sigma * normal(rng);

  BayesProblem p;
  p.forward = linear_model(a);
  p.data = y;
  p.prior_mean = VectorXd::Zero(n);
  p.prior_factor = std::make_shared<ScaledIdentityFactor>(n, 1.0);
  p.obs_factor = std::make_shared<ScaledIdentityFactor>(m, sigma);
  return p;
}

}  // namespace rto
