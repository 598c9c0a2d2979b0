#include "rto/proposal.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "rto/errors.hpp"
#include "rto/rng.hpp"

namespace rto {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log|det| from an LU decomposition; -inf when exactly singular.
double log_abs_det(const MatrixXd& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::PartialPivLU<MatrixXd> lu(a);
  double acc = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    const double d = std::abs(lu.matrixLU()(i, i));
    if (d == 0.0) return kNegInf;
    acc += std::log(d);
  }
  return acc;
}

MatrixXd dense_jacobian_H(const WhitenedProblem& wp, const VectorXd& v) {
  const Index n = wp.n(), m = wp.m();
  MatrixXd b(n + m, n);
  VectorXd unit = VectorXd::Zero(n);
  for (Index j = 0; j < n; ++j) {
    unit[j] = 1.0;
    b.col(j) = wp.jvp_H(v, unit);
    unit[j] = 0.0;
  }
  return b;
}

MatrixXd dense_jacobian_G(const WhitenedProblem& wp, const VectorXd& v) {
  const Index n = wp.n(), m = wp.m();
  MatrixXd j(m, n);
  VectorXd unit = VectorXd::Zero(n);
  for (Index k = 0; k < n; ++k) {
    unit[k] = 1.0;
    j.col(k) = wp.jvp_G(v, unit);
    unit[k] = 0.0;
  }
  return j;
}

// I_r + Lambda Psi^T dG(v) Phi, assembled with r Jacobian actions.
MatrixXd reduced_linearization(const WhitenedProblem& wp, const SvdBasis& basis,
                               const VectorXd& v) {
  const Index r = basis.rank();
  MatrixXd k = MatrixXd::Identity(r, r);
  for (Index j = 0; j < r; ++j) {
    const VectorXd col = wp.jvp_G(v, basis.phi.col(j));
    k.col(j) += basis.lambda.asDiagonal() * (basis.psi.transpose() * col);
  }
  return k;
}

// Golub-Kahan bidiagonalization of dG(v_ref) with full reorthogonalization.
// The operator has rank <= min(m, n), so the recurrence breaks down after a
// handful of steps: either beta vanishes (A = U B V^T with square upper
// bidiagonal B) or alpha vanishes one step later (B is k x (k+1); a random
// start vector has components in the null space, which makes this the common
// exit for rank-deficient operators).
void golub_kahan_svd(const WhitenedProblem& wp, const VectorXd& v_ref, MatrixXd& psi,
                     VectorXd& lambda, MatrixXd& phi) {
  const Index n = wp.n(), m = wp.m();
  const Index max_u = std::min(m, n);
  MatrixXd u_basis(m, max_u), v_basis(n, max_u + 1);
  VectorXd alpha(max_u), beta(max_u);

  auto reorth = [](const MatrixXd& basis, Index cols, VectorXd& w) {
    for (int pass = 0; pass < 2; ++pass)
      for (Index c = 0; c < cols; ++c) w -= basis.col(c).dot(w) * basis.col(c);
  };

  std::mt19937_64 rng(0x5bd1e995u);
  VectorXd v = standard_normal(rng, n);
  v.normalize();
  v_basis.col(0) = v;

  VectorXd w = wp.jvp_G(v_ref, v);
  double a = w.norm();
  double scale = a;
  const double tol = 1e-12;

  Index num_u = 0, num_v = 1;
  while (true) {
    if (a <= tol * std::max(scale, 1.0) || num_u == max_u) break;
    const Index k = num_u;
    alpha[k] = a;
    u_basis.col(k) = w / a;
    ++num_u;
    scale = std::max(scale, a);

    VectorXd wv = wp.vjp_G(v_ref, u_basis.col(k)) - a * v_basis.col(k);
    reorth(v_basis, num_v, wv);
    const double b = wv.norm();
    if (b <= tol * std::max(scale, 1.0) || num_v > n - 1) {
      beta[k] = 0.0;
      break;
    }
    beta[k] = b;
    v_basis.col(num_v) = wv / b;
    ++num_v;

    w = wp.jvp_G(v_ref, v_basis.col(num_v - 1)) - b * u_basis.col(k);
    reorth(u_basis, num_u, w);
    a = w.norm();
  }

  if (num_u == 0) {
    psi.resize(m, 0);
    phi.resize(n, 0);
    lambda.resize(0);
    return;
  }

  // B has one column per v vector used; the last beta couples into the extra
  // v column when alpha broke the recurrence.
  const Index cols = num_v;
  MatrixXd bidiag = MatrixXd::Zero(num_u, cols);
  for (Index i = 0; i < num_u; ++i) {
    bidiag(i, i) = alpha[i];
    if (i + 1 < cols && beta[i] > 0.0) bidiag(i, i + 1) = beta[i];
  }
  Eigen::JacobiSVD<MatrixXd> svd(bidiag, Eigen::ComputeThinU | Eigen::ComputeThinV);
  psi = u_basis.leftCols(num_u) * svd.matrixU();
  phi = v_basis.leftCols(cols) * svd.matrixV();
  lambda = svd.singularValues();
}

struct ScalablePieces {
  VectorXd damp;  // (lambda^2 + 1)^{-1/2}
  double half_log_sum;  // 1/2 sum log(1 + lambda^2)
};

ScalablePieces scalable_pieces(const SvdBasis& basis) {
  ScalablePieces p;
  p.damp = (basis.lambda.array().square() + 1.0).rsqrt();
  p.half_log_sum = 0.5 * (basis.lambda.array().square() + 1.0).log().sum();
  return p;
}

}  // namespace

SolveOptions default_proposal_options() {
  SolveOptions opts;
  opts.ftol = 1e-6;
  opts.max_iters = 800;
  opts.require_zero_residual = true;
  return opts;
}

SolveOptions default_reference_options() {
  SolveOptions opts;
  opts.ftol = 1e-6;
  opts.max_iters = 2000;
  return opts;
}

SvdBasis SvdBasis::truncated(double new_threshold) const {
  Index keep = 0;
  while (keep < lambda.size() && lambda[keep] > new_threshold) ++keep;
  SvdBasis out;
  out.psi = psi.leftCols(keep);
  out.lambda = lambda.head(keep);
  out.phi = phi.leftCols(keep);
  out.threshold = new_threshold;
  out.v_ref = v_ref;
  return out;
}

VectorXd find_reference(const WhitenedProblem& wp, const SolveOptions& opts) {
  ResidualProblem prob;
  prob.residual = [&wp](const VectorXd& v) { return wp.H(v); };
  prob.jvp = [&wp](const VectorXd& v, const VectorXd& dv) { return wp.jvp_H(v, dv); };
  prob.vjp = [&wp](const VectorXd& v, const VectorXd& dy) { return wp.vjp_H(v, dy); };
  prob.start = VectorXd::Zero(wp.n());
  const SolveReport report = solve_nlls(prob, opts);
  if (!report.converged)
    throw ReferencePointError("reference-point optimization failed: " + to_string(report.reason));
  return report.solution;
}

QrBasis build_qr_basis(const WhitenedProblem& wp, const VectorXd& v_ref) {
  const Index n = wp.n(), m = wp.m();
  const MatrixXd b = dense_jacobian_H(wp, v_ref);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(b);
  if (qr.rank() < n)
    throw FactorizationError("dH(v_ref) is rank deficient; RTO basis undefined");
  QrBasis basis;
  basis.q = qr.householderQ() * MatrixXd::Identity(n + m, n);
  basis.v_ref = v_ref;
  return basis;
}

SvdBasis build_svd_basis(const WhitenedProblem& wp, const VectorXd& v_ref, double tau,
                         const SvdOptions& opts) {
  if (tau < 0.0) throw std::invalid_argument("build_svd_basis: threshold must be >= 0");
  SvdBasis basis;
  basis.v_ref = v_ref;
  basis.threshold = tau;

  MatrixXd psi, phi;
  VectorXd lambda;
  if (!opts.force_iterative && wp.n() <= opts.dense_limit) {
    const MatrixXd j = dense_jacobian_G(wp, v_ref);
    Eigen::BDCSVD<MatrixXd> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
    psi = svd.matrixU();
    phi = svd.matrixV();
    lambda = svd.singularValues();
  } else {
    golub_kahan_svd(wp, v_ref, psi, lambda, phi);
  }

  // tau = 0 keeps everything above the numerical-noise floor.
  double cutoff = tau;
  if (cutoff == 0.0 && lambda.size() > 0)
    cutoff = lambda[0] * std::numeric_limits<double>::epsilon() *
             static_cast<double>(std::max(wp.n(), wp.m()));
  Index keep = 0;
  while (keep < lambda.size() && lambda[keep] > cutoff) ++keep;
  basis.psi = psi.leftCols(keep);
  basis.phi = phi.leftCols(keep);
  basis.lambda = lambda.head(keep);
  return basis;
}

Proposal propose_standard(const WhitenedProblem& wp, const QrBasis& basis,
                          const VectorXd& eta, const SolveOptions& opts) {
  Proposal prop;
  prop.noise = eta;

  const VectorXd target = basis.q.transpose() * eta;
  ResidualProblem sys;
  sys.residual = [&](const VectorXd& v) {
    return (basis.q.transpose() * wp.H(v) - target).eval();
  };
  sys.jvp = [&](const VectorXd& v, const VectorXd& dv) {
    return (basis.q.transpose() * wp.jvp_H(v, dv)).eval();
  };
  sys.vjp = [&](const VectorXd& v, const VectorXd& dr) {
    return wp.vjp_H(v, basis.q * dr);
  };
  sys.start = basis.v_ref;

  prop.solve_report = solve_nlls(sys, opts);
  prop.v = prop.solve_report.solution;
  if (!prop.solve_report.converged) return prop;

  prop.log_weight = weight_standard(wp, basis, prop.v);
  prop.valid = std::isfinite(prop.log_weight);
  return prop;
}

double weight_standard(const WhitenedProblem& wp, const QrBasis& basis, const VectorXd& v) {
  const MatrixXd b = dense_jacobian_H(wp, v);
  const double logdet = log_abs_det(basis.q.transpose() * b);
  if (!std::isfinite(logdet)) return kNegInf;
  const VectorXd h = wp.H(v);
  const VectorXd qth = basis.q.transpose() * h;
  return -logdet - 0.5 * h.squaredNorm() + 0.5 * qth.squaredNorm();
}

Proposal propose_scalable(const WhitenedProblem& wp, const SvdBasis& basis,
                          const VectorXd& xi, const SolveOptions& opts) {
  Proposal prop;
  prop.noise = xi;
  const Index r = basis.rank();

  if (r == 0) {
    // No data-informed directions: the proposal is a prior draw.
    prop.v = xi;
    prop.solve_report.solution = xi;
    prop.solve_report.converged = true;
    prop.solve_report.reason = Termination::ConvergedZeroResidual;
    prop.log_weight = weight_scalable(wp, basis, prop.v);
    prop.valid = std::isfinite(prop.log_weight);
    return prop;
  }

  const ScalablePieces pieces = scalable_pieces(basis);
  const VectorXd xi_r = basis.phi.transpose() * xi;
  const VectorXd v_perp = xi - basis.phi * xi_r;

  auto embed = [&](const VectorXd& vr) { return (v_perp + basis.phi * vr).eval(); };

  // Reduced system: (Lambda^2 + I)^{-1/2} (v_r + Lambda Psi^T G(v)) = Phi^T xi.
  ResidualProblem sys;
  sys.residual = [&](const VectorXd& vr) {
    const VectorXd g = wp.G(embed(vr));
    return ((pieces.damp.array() *
             (vr + basis.lambda.asDiagonal() * (basis.psi.transpose() * g)).array())
                .matrix() -
            xi_r)
        .eval();
  };
  sys.jvp = [&](const VectorXd& vr, const VectorXd& dvr) {
    const VectorXd dg = wp.jvp_G(embed(vr), basis.phi * dvr);
    return (pieces.damp.array() *
            (dvr + basis.lambda.asDiagonal() * (basis.psi.transpose() * dg)).array())
        .matrix()
        .eval();
  };
  sys.vjp = [&](const VectorXd& vr, const VectorXd& dr) {
    const VectorXd t = (pieces.damp.array() * dr.array()).matrix();
    const VectorXd back = wp.vjp_G(embed(vr), basis.psi * (basis.lambda.asDiagonal() * t));
    return (t + basis.phi.transpose() * back).eval();
  };
  sys.start = basis.phi.transpose() * basis.v_ref;

  prop.solve_report = solve_nlls(sys, opts);
  prop.v = embed(prop.solve_report.solution);
  if (!prop.solve_report.converged) return prop;

  prop.log_weight = weight_scalable(wp, basis, prop.v);
  prop.valid = std::isfinite(prop.log_weight);
  return prop;
}

double weight_scalable(const WhitenedProblem& wp, const SvdBasis& basis, const VectorXd& v) {
  const VectorXd g = wp.G(v);
  if (basis.rank() == 0) return -0.5 * g.squaredNorm();

  const ScalablePieces pieces = scalable_pieces(basis);
  const double logdet_k = log_abs_det(reduced_linearization(wp, basis, v));
  if (!std::isfinite(logdet_k)) return kNegInf;

  const VectorXd phi_t_v = basis.phi.transpose() * v;
  const VectorXd s =
      (pieces.damp.array() *
       (phi_t_v + basis.lambda.asDiagonal() * (basis.psi.transpose() * g)).array())
          .matrix();
  return pieces.half_log_sum - logdet_k - 0.5 * g.squaredNorm() -
         0.5 * phi_t_v.squaredNorm() + 0.5 * s.squaredNorm();
}

VectorXd reduced_jacobian_action(const WhitenedProblem& wp, const SvdBasis& basis,
                                 const VectorXd& v, const VectorXd& dvr) {
  const ScalablePieces pieces = scalable_pieces(basis);
  const VectorXd dg = wp.jvp_G(v, basis.phi * dvr);
  return (pieces.damp.array() *
          (dvr + basis.lambda.asDiagonal() * (basis.psi.transpose() * dg)).array())
      .matrix();
}

VectorXd reduced_jacobian_adjoint(const WhitenedProblem& wp, const SvdBasis& basis,
                                  const VectorXd& v, const VectorXd& dr) {
  const ScalablePieces pieces = scalable_pieces(basis);
  const VectorXd t = (pieces.damp.array() * dr.array()).matrix();
  const VectorXd back = wp.vjp_G(v, basis.psi * (basis.lambda.asDiagonal() * t));
  return t + basis.phi.transpose() * back;
}

double log_proposal_density(const WhitenedProblem& wp, const QrBasis& basis,
                            const VectorXd& v) {
  const Index n = wp.n();
  const MatrixXd b = dense_jacobian_H(wp, v);
  const double logdet = log_abs_det(basis.q.transpose() * b);
  const VectorXd qth = basis.q.transpose() * wp.H(v);
  return -0.5 * n * std::log(2.0 * M_PI) + logdet - 0.5 * qth.squaredNorm();
}

double log_proposal_density(const WhitenedProblem& wp, const SvdBasis& basis,
                            const VectorXd& v) {
  const Index n = wp.n();
  const double log_two_pi = std::log(2.0 * M_PI);
  if (basis.rank() == 0) return -0.5 * n * log_two_pi - 0.5 * v.squaredNorm();

  const ScalablePieces pieces = scalable_pieces(basis);
  const double logdet_k = log_abs_det(reduced_linearization(wp, basis, v));
  const VectorXd g = wp.G(v);
  const VectorXd phi_t_v = basis.phi.transpose() * v;
  const VectorXd v_perp = v - basis.phi * phi_t_v;
  const VectorXd s =
      (pieces.damp.array() *
       (phi_t_v + basis.lambda.asDiagonal() * (basis.psi.transpose() * g)).array())
          .matrix();
  return -0.5 * n * log_two_pi + (logdet_k - pieces.half_log_sum) -
         0.5 * (v_perp.squaredNorm() + s.squaredNorm());
}

namespace {

template <typename Basis, typename ProposeFn>
std::vector<Proposal> run_proposal_pool(const Basis& basis, int count, uint64_t seed,
                                        int workers, Index noise_dim, ProposeFn&& propose) {
  std::vector<Proposal> out(count);
  std::atomic<int> next{0};
  auto work = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) break;
      std::mt19937_64 rng = substream(seed, static_cast<uint64_t>(i), kProposalStream);
      const VectorXd noise = standard_normal(rng, noise_dim);
      out[i] = propose(basis, noise);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace

std::vector<Proposal> sample_proposals(const WhitenedProblem& wp, const QrBasis& basis,
                                       int count, uint64_t seed, int workers,
                                       const SolveOptions& opts) {
  return run_proposal_pool(basis, count, seed, workers, wp.n() + wp.m(),
                           [&](const QrBasis& b, const VectorXd& noise) {
                             return propose_standard(wp, b, noise, opts);
                           });
}

std::vector<Proposal> sample_proposals(const WhitenedProblem& wp, const SvdBasis& basis,
                                       int count, uint64_t seed, int workers,
                                       const SolveOptions& opts) {
  return run_proposal_pool(basis, count, seed, workers, wp.n(),
                           [&](const SvdBasis& b, const VectorXd& noise) {
                             return propose_scalable(wp, b, noise, opts);
                           });
}

}  // namespace rto
