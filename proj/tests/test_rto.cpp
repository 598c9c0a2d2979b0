#include <doctest.h>

#include <cmath>

#include "rto/errors.hpp"
#include "rto/models.hpp"
#include "rto/problem.hpp"
#include "rto/proposal.hpp"
#include "rto/rng.hpp"
#include "test_support.hpp"

using namespace rto;
using namespace rto::testing;

namespace {

// Linear whitened problem G(v) = M v - c, assembled from the pieces.
WhitenedProblem linear_whitened(const MatrixXd& a, const VectorXd& y, double sigma) {
  BayesProblem p;
  p.forward = linear_model(a);
  p.data = y;
  p.prior_mean = VectorXd::Zero(a.cols());
  p.prior_factor = std::make_shared<ScaledIdentityFactor>(a.cols(), 1.0);
  p.obs_factor = std::make_shared<ScaledIdentityFactor>(a.rows(), sigma);
  return whiten(std::move(p));
}

// Smooth nonlinear test map F(v) = A v + q * B (v .* v) with exact derivatives.
std::shared_ptr<const ForwardModel> quadratic_model(const MatrixXd& a, const MatrixXd& b,
                                                    double q) {
  return std::make_shared<CallbackModel>(
      a.cols(), a.rows(),
      [a, b, q](const VectorXd& v) { return (a * v + q * (b * v.cwiseProduct(v))).eval(); },
      [a, b, q](const VectorXd& v, const VectorXd& dv) {
        return (a * dv + 2.0 * q * (b * v.cwiseProduct(dv))).eval();
      },
      [a, b, q](const VectorXd& v, const VectorXd& dy) {
        return (a.transpose() * dy + 2.0 * q * v.cwiseProduct(b.transpose() * dy)).eval();
      });
}

WhitenedProblem quadratic_whitened(Index n, Index m, uint64_t seed) {
  const MatrixXd a = random_matrix(m, n, seed);
  const MatrixXd b = random_matrix(m, n, seed + 1, 0.5);
  BayesProblem p;
  p.forward = quadratic_model(a, b, 0.15);
  p.data = random_vector(m, seed + 2, 0.5);
  p.prior_mean = VectorXd::Zero(n);
  p.prior_factor = std::make_shared<ScaledIdentityFactor>(n, 1.0);
  p.obs_factor = std::make_shared<ScaledIdentityFactor>(m, 1.0);
  return whiten(std::move(p));
}

MatrixXd dense_dH(const WhitenedProblem& wp, const VectorXd& v) {
  const Index n = wp.n(), m = wp.m();
  MatrixXd out(n + m, n);
  for (Index j = 0; j < n; ++j) out.col(j) = wp.jvp_H(v, VectorXd::Unit(n, j));
  return out;
}

}  // namespace

TEST_SUITE("rto") {

TEST_CASE("find_reference matches dense normal equations on a linear model") {
  const Index n = 4, m = 3;
  const MatrixXd a = random_matrix(m, n, 10);
  const VectorXd y = random_vector(m, 11);
  const WhitenedProblem wp = linear_whitened(a, y, 0.7);

  // G(v) = M v - c; the mode solves (I + M^T M) v = M^T c.
  const VectorXd c = -wp.G(VectorXd::Zero(n));
  MatrixXd m_mat(m, n);
  for (Index j = 0; j < n; ++j) m_mat.col(j) = wp.G(VectorXd::Unit(n, j)) + c;
  const VectorXd oracle =
      (MatrixXd::Identity(n, n) + m_mat.transpose() * m_mat).ldlt().solve(m_mat.transpose() * c);

  const VectorXd v_ref = find_reference(wp);
  CHECK((v_ref - oracle).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("find_reference scalar cases") {
  // G(v) = v - 2: minimize (v^2 + (v-2)^2)/2 at v = 1.
  MatrixXd one(1, 1);
  one << 1.0;
  const WhitenedProblem shifted = linear_whitened(one, VectorXd::Constant(1, 2.0), 1.0);
  CHECK(find_reference(shifted)[0] == doctest::Approx(1.0).epsilon(1e-6));

  // Zero data, identity model: symmetric minimum at the origin.
  const WhitenedProblem centered = linear_whitened(one, VectorXd::Zero(1), 1.0);
  CHECK(std::abs(find_reference(centered)[0]) < 1e-8);
}

TEST_CASE("qr basis spans the Jacobian range") {
  // Flat model: dG = 0, so dH = [1; 0] and Q is the first unit vector.
  MatrixXd zero(1, 1);
  zero << 0.0;
  const WhitenedProblem flat = linear_whitened(zero, VectorXd::Zero(1), 1.0);
  const QrBasis unit = build_qr_basis(flat, VectorXd::Zero(1));
  CHECK(std::abs(std::abs(unit.q(0, 0)) - 1.0) < 1e-14);
  CHECK(std::abs(unit.q(1, 0)) < 1e-14);

  const WhitenedProblem wp = quadratic_whitened(3, 2, 30);
  const VectorXd v_ref = find_reference(wp);
  const QrBasis basis = build_qr_basis(wp, v_ref);

  const MatrixXd qtq = basis.q.transpose() * basis.q;
  CHECK((qtq - MatrixXd::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-10);

  // The projector Q Q^T fixes every column of dH(v_ref).
  const MatrixXd dh = dense_dH(wp, v_ref);
  CHECK((basis.q * (basis.q.transpose() * dh) - dh).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("svd basis truncation keeps exactly the values above the threshold") {
  MatrixXd diag = MatrixXd::Zero(3, 3);
  diag.diagonal() << 3.0, 1.0, 0.005;
  const WhitenedProblem wp = linear_whitened(diag, VectorXd::Zero(3), 1.0);
  const VectorXd v_ref = VectorXd::Zero(3);

  const SvdBasis b = build_svd_basis(wp, v_ref, 1e-2);
  REQUIRE(b.rank() == 2);
  CHECK(b.lambda[0] == doctest::Approx(3.0));
  CHECK(b.lambda[1] == doctest::Approx(1.0));

  const SvdBasis full = build_svd_basis(wp, v_ref, 0.0);
  CHECK(full.rank() == 3);

  const SvdBasis none = build_svd_basis(wp, v_ref, 10.0);
  CHECK(none.rank() == 0);

  // Re-truncation of an existing basis.
  CHECK(full.truncated(1e-2).rank() == 2);
  CHECK(full.truncated(2.999).rank() == 1);
}

TEST_CASE("svd basis reconstructs the Jacobian of the toy model") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const SvdBasis b = build_svd_basis(wp, v_ref, 0.0);

  // Independent dense Jacobian from adjoint rows.
  MatrixXd jac(wp.m(), wp.n());
  for (Index i = 0; i < wp.m(); ++i)
    jac.row(i) = wp.vjp_G(v_ref, VectorXd::Unit(wp.m(), i)).transpose();

  const MatrixXd rebuilt = b.psi * b.lambda.asDiagonal() * b.phi.transpose();
  CHECK((rebuilt - jac).lpNorm<Eigen::Infinity>() < 1e-8);

  CHECK((b.psi.transpose() * b.psi - MatrixXd::Identity(b.rank(), b.rank()))
            .lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((b.phi.transpose() * b.phi - MatrixXd::Identity(b.rank(), b.rank()))
            .lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("iterative bidiagonalization agrees with the dense SVD") {
  const WhitenedProblem wp = quadratic_whitened(24, 6, 77);
  const VectorXd v_ref = find_reference(wp);
  const SvdBasis dense = build_svd_basis(wp, v_ref, 0.0);
  SvdOptions opts;
  opts.force_iterative = true;
  const SvdBasis lanczos = build_svd_basis(wp, v_ref, 0.0, opts);

  REQUIRE(lanczos.rank() == dense.rank());
  CHECK((lanczos.lambda - dense.lambda).lpNorm<Eigen::Infinity>() < 1e-9);
  const MatrixXd pd = dense.psi * dense.lambda.asDiagonal() * dense.phi.transpose();
  const MatrixXd pl = lanczos.psi * lanczos.lambda.asDiagonal() * lanczos.phi.transpose();
  CHECK((pd - pl).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("standard proposal solves the projected linear system exactly") {
  const Index n = 3, m = 2;
  const MatrixXd a = random_matrix(m, n, 40);
  const VectorXd y = random_vector(m, 41);
  const WhitenedProblem wp = linear_whitened(a, y, 1.0);
  const VectorXd v_ref = find_reference(wp);
  const QrBasis basis = build_qr_basis(wp, v_ref);

  std::mt19937_64 rng(7);
  const VectorXd eta = standard_normal(rng, n + m);
  const Proposal prop = propose_standard(wp, basis, eta);
  REQUIRE(prop.valid);
  CHECK(prop.solve_report.iterations <= 2);

  // Oracle: Q^T [v; M v - c] = Q^T eta is an n x n linear system in v.
  const VectorXd c = -wp.G(VectorXd::Zero(n));
  MatrixXd m_mat(m, n);
  for (Index j = 0; j < n; ++j) m_mat.col(j) = wp.G(VectorXd::Unit(n, j)) + c;
  MatrixXd stacked(n + m, n);
  stacked.topRows(n) = MatrixXd::Identity(n, n);
  stacked.bottomRows(m) = m_mat;
  VectorXd shift = VectorXd::Zero(n + m);
  shift.tail(m) = -c;
  const VectorXd direct = (basis.q.transpose() * stacked)
                              .partialPivLu()
                              .solve(basis.q.transpose() * (eta - shift));
  CHECK((prop.v - direct).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("the reference noise maps back to the reference point") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const QrBasis basis = build_qr_basis(wp, v_ref);
  const Proposal prop = propose_standard(wp, basis, wp.H(v_ref));
  REQUIRE(prop.valid);
  CHECK(prop.solve_report.iterations == 0);
  CHECK((prop.v - v_ref).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("standard log-weight: constant for linear models") {
  const WhitenedProblem wp = linear_whitened(random_matrix(2, 3, 50), random_vector(2, 51), 0.6);
  const QrBasis basis = build_qr_basis(wp, find_reference(wp));
  double lw0 = weight_standard(wp, basis, random_vector(3, 500));
  for (uint64_t s = 1; s < 100; ++s) {
    const double lw = weight_standard(wp, basis, random_vector(3, 500 + s, 2.0));
    CHECK(std::abs(lw - lw0) < 1e-9);
  }
}

TEST_CASE("standard log-weight: scalar identity model by hand") {
  // G(v) = v: dH = (1,1)^T, |det Q^T dH| = sqrt(2), and the exponent cancels,
  // so log w = -log sqrt(2) everywhere.
  MatrixXd one(1, 1);
  one << 1.0;
  const WhitenedProblem wp = linear_whitened(one, VectorXd::Zero(1), 1.0);
  const QrBasis basis = build_qr_basis(wp, VectorXd::Zero(1));
  for (double v : {-1.5, 0.0, 0.4, 2.0}) {
    CHECK(weight_standard(wp, basis, VectorXd::Constant(1, v)) ==
          doctest::Approx(-0.5 * std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("standard log-weight matches a dense brute-force oracle") {
  const WhitenedProblem wp = quadratic_whitened(3, 2, 60);
  const VectorXd v_ref = find_reference(wp);
  const QrBasis basis = build_qr_basis(wp, v_ref);

  for (uint64_t s = 0; s < 20; ++s) {
    const VectorXd v = random_vector(3, 600 + s, 0.8);
    const MatrixXd dh = dense_dH(wp, v);
    const MatrixXd qt_dh = basis.q.transpose() * dh;
    const double logdet = std::log(std::abs(qt_dh.partialPivLu().determinant()));
    const VectorXd h = wp.H(v);
    const double oracle =
        -logdet - 0.5 * h.squaredNorm() + 0.5 * (basis.q.transpose() * h).squaredNorm();
    CHECK(weight_standard(wp, basis, v) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("rank-zero scalable proposal is a prior draw with misfit weight") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const SvdBasis b = build_svd_basis(wp, v_ref, 1e9);
  REQUIRE(b.rank() == 0);

  std::mt19937_64 rng(9);
  const VectorXd xi = standard_normal(rng, 2);
  const Proposal prop = propose_scalable(wp, b, xi);
  REQUIRE(prop.valid);
  CHECK(prop.v == xi);  // exactly
  CHECK(prop.log_weight == doctest::Approx(-0.5 * wp.G(xi).squaredNorm()).epsilon(1e-13));
}

TEST_CASE("scalable and standard weights differ by a v-independent constant at full rank") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const QrBasis qr = build_qr_basis(wp, v_ref);
  const SvdBasis svd = build_svd_basis(wp, v_ref, 0.0);

  double offset_sum = 0.0;
  std::vector<double> offsets;
  for (uint64_t s = 0; s < 50; ++s) {
    const VectorXd v = random_vector(2, 700 + s, 1.5);
    const double off = weight_scalable(wp, svd, v) - weight_standard(wp, qr, v);
    offsets.push_back(off);
    offset_sum += off;
  }
  const double mean_offset = offset_sum / offsets.size();
  for (double off : offsets) CHECK(std::abs(off - mean_offset) <= 1e-8);
}

TEST_CASE("determinant factorization matches a dense determinant oracle") {
  for (uint64_t seed : {81ull, 82ull, 83ull}) {
    const WhitenedProblem wp = quadratic_whitened(4, 3, seed);
    const VectorXd v_ref = find_reference(wp);
    const SvdBasis b = build_svd_basis(wp, v_ref, 0.0);
    const VectorXd damp = (b.lambda.array().square() + 1.0).rsqrt().matrix();

    for (uint64_t s = 0; s < 10; ++s) {
      const VectorXd v = random_vector(4, 900 + 31 * seed + s, 0.7);

      // Dense oracle: assemble the polar factor and dH, take the LU det.
      const Index n = wp.n(), m = wp.m();
      MatrixXd q(n + m, n);
      q.topRows(n) = MatrixXd::Identity(n, n) - b.phi * b.phi.transpose() +
                     b.phi * damp.asDiagonal() * b.phi.transpose();
      q.bottomRows(m) = b.psi * b.lambda.asDiagonal() * damp.asDiagonal() *
                        b.phi.transpose();
      const double dense_det = std::abs((q.transpose() * dense_dH(wp, v))
                                            .partialPivLu()
                                            .determinant());

      // Factored form: |det (Lambda^2+I)^{-1/2}| * |det (I_r + Lambda Psi^T dG Phi)|.
      MatrixXd k = MatrixXd::Identity(b.rank(), b.rank());
      for (Index j = 0; j < b.rank(); ++j)
        k.col(j) += b.lambda.asDiagonal() * (b.psi.transpose() * wp.jvp_G(v, b.phi.col(j)));
      const double factored =
          damp.prod() * std::abs(k.partialPivLu().determinant());

      CHECK(std::abs(dense_det - factored) <= 1e-10 * (1.0 + std::abs(dense_det)));
    }
  }
}

TEST_CASE("scalable proposals satisfy the split system") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const SvdBasis b = build_svd_basis(wp, v_ref, 0.0);

  const auto proposals = sample_proposals(wp, b, 100, 123, 1);
  const VectorXd damp = (b.lambda.array().square() + 1.0).rsqrt().matrix();
  for (const Proposal& prop : proposals) {
    REQUIRE(prop.valid);
    const VectorXd xi = prop.noise;
    const VectorXd v_perp = prop.v - b.phi * (b.phi.transpose() * prop.v);
    // Orthogonal part copied through unchanged.
    const VectorXd xi_perp = xi - b.phi * (b.phi.transpose() * xi);
    CHECK((v_perp - xi_perp).lpNorm<Eigen::Infinity>() < 1e-9);
    // Componentwise orthogonality of the solved point's complement piece.
    CHECK((b.phi.transpose() * v_perp).lpNorm<Eigen::Infinity>() <= 1e-12);
    // Reduced residual at the returned point.
    const VectorXd res =
        damp.asDiagonal() * (b.phi.transpose() * prop.v +
                             b.lambda.asDiagonal() * (b.psi.transpose() * wp.G(prop.v))) -
        b.phi.transpose() * xi;
    CHECK(res.norm() <= std::sqrt(2.0 * 1e-6) + 1e-9);
  }
}

TEST_CASE("standard proposals satisfy their defining system post hoc") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const QrBasis basis = build_qr_basis(wp, v_ref);
  const auto proposals = sample_proposals(wp, basis, 60, 321, 1);
  for (const Proposal& prop : proposals) {
    REQUIRE(prop.valid);
    const VectorXd res = basis.q.transpose() * (wp.H(prop.v) - prop.noise);
    CHECK(res.norm() <= std::sqrt(2.0 * 1e-6) + 1e-9);
  }
}

TEST_CASE("any orthonormal basis of the same range gives identical acceptance ratios") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const QrBasis basis = build_qr_basis(wp, v_ref);

  QrBasis rotated = basis;
  rotated.q = basis.q * random_orthogonal(wp.n(), 5);

  const VectorXd va = random_vector(2, 1000, 1.2);
  const VectorXd vb = random_vector(2, 1001, 1.2);
  const double ratio_a =
      weight_standard(wp, basis, va) - weight_standard(wp, basis, vb);
  const double ratio_b =
      weight_standard(wp, rotated, va) - weight_standard(wp, rotated, vb);
  CHECK(std::abs(ratio_a - ratio_b) <= 1e-8);

  // Value-level: the offset is constant across points.
  const double off_a = weight_standard(wp, rotated, va) - weight_standard(wp, basis, va);
  const double off_b = weight_standard(wp, rotated, vb) - weight_standard(wp, basis, vb);
  CHECK(std::abs(off_a - off_b) <= 1e-8);
}

TEST_CASE("reduced jacobian action: flat point, finite differences, adjoint") {
  // Model whose Jacobian vanishes at the origin.
  const MatrixXd b_mat = random_matrix(2, 2, 91, 0.6);
  auto model = quadratic_model(MatrixXd::Zero(2, 2), b_mat, 0.4);
  BayesProblem p;
  p.forward = model;
  p.data = random_vector(2, 92, 0.3);
  p.prior_mean = VectorXd::Zero(2);
  p.prior_factor = std::make_shared<ScaledIdentityFactor>(2, 1.0);
  p.obs_factor = std::make_shared<ScaledIdentityFactor>(2, 1.0);
  const WhitenedProblem wp = whiten(std::move(p));

  const VectorXd v_ref = VectorXd::Ones(2);
  const SvdBasis basis = build_svd_basis(wp, v_ref, 0.0);
  REQUIRE(basis.rank() == 2);
  const VectorXd damp = (basis.lambda.array().square() + 1.0).rsqrt().matrix();

  // dG(0) = 0: the action reduces to the diagonal damping.
  const VectorXd dvr = random_vector(basis.rank(), 93);
  const VectorXd at_flat = reduced_jacobian_action(wp, basis, VectorXd::Zero(2), dvr);
  CHECK((at_flat - damp.asDiagonal() * dvr).lpNorm<Eigen::Infinity>() < 1e-12);

  // Finite differences of the reduced residual in the direction dvr.
  std::mt19937_64 rng(94);
  const VectorXd xi = standard_normal(rng, 2);
  const VectorXd xi_r = basis.phi.transpose() * xi;
  const VectorXd v_perp = xi - basis.phi * xi_r;
  auto reduced_residual = [&](const VectorXd& vr) {
    const VectorXd v = v_perp + basis.phi * vr;
    return ((damp.asDiagonal() *
             (vr + basis.lambda.asDiagonal() * (basis.psi.transpose() * wp.G(v))))
                .eval() -
            xi_r)
        .eval();
  };
  const VectorXd vr0 = random_vector(basis.rank(), 95, 0.5);
  const VectorXd fd = fd_directional(reduced_residual, vr0, dvr);
  const VectorXd an =
      reduced_jacobian_action(wp, basis, v_perp + basis.phi * vr0, dvr);
  CHECK((fd - an).norm() <= 1e-5 * (1.0 + an.norm()));

  // Adjoint pairing.
  for (uint64_t s = 0; s < 10; ++s) {
    const VectorXd x = random_vector(basis.rank(), 960 + s);
    const VectorXd yv = random_vector(basis.rank(), 970 + s);
    const VectorXd v = v_perp + basis.phi * random_vector(basis.rank(), 980 + s, 0.4);
    const double lhs = reduced_jacobian_action(wp, basis, v, x).dot(yv);
    const double rhs = x.dot(reduced_jacobian_adjoint(wp, basis, v, yv));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("scalable and standard proposal distributions agree at full rank") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const QrBasis qr = build_qr_basis(wp, v_ref);
  const SvdBasis svd = build_svd_basis(wp, v_ref, 0.0);

  const int count = 20000;
  const auto std_props = sample_proposals(wp, qr, count, 2024, 2);
  const auto svd_props = sample_proposals(wp, svd, count, 4048, 2);

  auto moments = [&](const std::vector<Proposal>& props) {
    VectorXd mean = VectorXd::Zero(2);
    for (const auto& p : props) mean += p.v;
    mean /= double(props.size());
    MatrixXd cov = MatrixXd::Zero(2, 2);
    for (const auto& p : props) cov += (p.v - mean) * (p.v - mean).transpose();
    cov /= double(props.size() - 1);
    return std::make_pair(mean, cov);
  };
  const auto [mean_a, cov_a] = moments(std_props);
  const auto [mean_b, cov_b] = moments(svd_props);

  // Two-sample comparison: means within ~5 combined standard errors.
  for (Index c = 0; c < 2; ++c) {
    const double se = std::sqrt((cov_a(c, c) + cov_b(c, c)) / count);
    CHECK(std::abs(mean_a[c] - mean_b[c]) < 5.0 * se);
  }
  CHECK((cov_a - cov_b).lpNorm<Eigen::Infinity>() < 0.05);
}

TEST_CASE("parallel proposal generation is independent of the worker count") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const SvdBasis b = build_svd_basis(wp, v_ref, 0.0);

  const auto serial = sample_proposals(wp, b, 64, 99, 1);
  const auto threaded = sample_proposals(wp, b, 64, 99, 3);
  REQUIRE(serial.size() == threaded.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].v == threaded[i].v);  // bitwise
    CHECK(serial[i].log_weight == threaded[i].log_weight);
  }
}

TEST_CASE("proposal density normalizes on the toy grid") {
  const WhitenedProblem wp = whiten(toy2d_problem());
  const VectorXd v_ref = find_reference(wp);
  const SvdBasis b = build_svd_basis(wp, v_ref, 0.0);
  const Quadrature2d quad(241, -6.0, 6.0);
  const double mass =
      quad.integrate([&](const VectorXd& v) { return std::exp(log_proposal_density(wp, b, v)); });
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
}

}  // TEST_SUITE
