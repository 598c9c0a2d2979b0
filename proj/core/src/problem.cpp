#include "rto/problem.hpp"

#include <cmath>
#include <stdexcept>

#include "rto/errors.hpp"

namespace rto {

DenseFactor::DenseFactor(MatrixXd s) : s_(std::move(s)) {
  if (s_.rows() != s_.cols()) throw std::invalid_argument("DenseFactor: matrix must be square");
  lu_.compute(s_);
  // PartialPivLU has no rank query; probe the diagonal of U instead.
  const double scale = s_.cwiseAbs().maxCoeff();
  const double tol = scale * 1e-14 * static_cast<double>(s_.rows());
  if (scale == 0.0 || lu_.matrixLU().diagonal().cwiseAbs().minCoeff() <= tol)
    throw FactorizationError("DenseFactor: factor matrix is singular");
}

std::shared_ptr<DenseFactor> DenseFactor::from_covariance(const MatrixXd& gamma) {
  Eigen::LLT<MatrixXd> llt(gamma);
  if (llt.info() != Eigen::Success)
    throw FactorizationError("DenseFactor: covariance is not positive definite");
  return std::make_shared<DenseFactor>(MatrixXd(llt.matrixL()));
}

VectorXd DenseFactor::solve(const VectorXd& b) const { return lu_.solve(b); }

VectorXd DenseFactor::solve_transpose(const VectorXd& b) const {
  return lu_.transpose().solve(b);
}

void BayesProblem::validate() const {
  if (!forward || !prior_factor || !obs_factor)
    throw std::invalid_argument("BayesProblem: missing forward model or factor");
  const Index n = forward->input_dim();
  const Index m = forward->output_dim();
  if (m < 1) throw std::invalid_argument("BayesProblem: need at least one observation");
  if (data.size() != m) throw std::invalid_argument("BayesProblem: data/model dimension mismatch");
  if (prior_mean.size() != n)
    throw std::invalid_argument("BayesProblem: prior mean/model dimension mismatch");
  if (prior_factor->dim() != n)
    throw std::invalid_argument("BayesProblem: prior factor dimension mismatch");
  if (obs_factor->dim() != m)
    throw std::invalid_argument("BayesProblem: observation factor dimension mismatch");
}

WhitenedProblem::WhitenedProblem(BayesProblem problem) : problem_(std::move(problem)) {
  problem_.validate();
  n_ = problem_.forward->input_dim();
  m_ = problem_.forward->output_dim();
}

WhitenedProblem whiten(BayesProblem problem) { return WhitenedProblem(std::move(problem)); }

VectorXd WhitenedProblem::G(const VectorXd& v) const {
  const VectorXd u = unwhiten(v);
  VectorXd out = problem_.obs_factor->solve(problem_.forward->eval(u) - problem_.data);
  if (!out.allFinite()) throw NonFiniteEvalError("whitened forward map returned non-finite values");
  return out;
}

VectorXd WhitenedProblem::jvp_G(const VectorXd& v, const VectorXd& dv) const {
  const VectorXd u = unwhiten(v);
  return problem_.obs_factor->solve(problem_.forward->jvp(u, problem_.prior_factor->apply(dv)));
}

VectorXd WhitenedProblem::vjp_G(const VectorXd& v, const VectorXd& dy) const {
  const VectorXd u = unwhiten(v);
  return problem_.prior_factor->apply_transpose(
      problem_.forward->vjp(u, problem_.obs_factor->solve_transpose(dy)));
}

VectorXd WhitenedProblem::H(const VectorXd& v) const {
  VectorXd out(n_ + m_);
  out.head(n_) = v;
  out.tail(m_) = G(v);
  return out;
}

VectorXd WhitenedProblem::jvp_H(const VectorXd& v, const VectorXd& dv) const {
  VectorXd out(n_ + m_);
  out.head(n_) = dv;
  out.tail(m_) = jvp_G(v, dv);
  return out;
}

VectorXd WhitenedProblem::vjp_H(const VectorXd& v, const VectorXd& dy) const {
  return dy.head(n_) + vjp_G(v, dy.tail(m_));
}

double WhitenedProblem::log_target(const VectorXd& v) const {
  const double value = -0.5 * H(v).squaredNorm();
  if (!std::isfinite(value)) throw NonFiniteEvalError("log target is non-finite");
  return value;
}

VectorXd WhitenedProblem::unwhiten(const VectorXd& v) const {
  return problem_.prior_factor->apply(v) + problem_.prior_mean;
}

VectorXd WhitenedProblem::whiten_point(const VectorXd& u) const {
  return problem_.prior_factor->solve(u - problem_.prior_mean);
}

}  // namespace rto
