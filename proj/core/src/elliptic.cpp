#include "rto/elliptic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "rto/errors.hpp"

namespace rto {

namespace {

// Thomas algorithm; throws on a vanishing pivot. sub[0] and sup[n-1] unused.
VectorXd tridiag_solve(const VectorXd& sub, const VectorXd& diag, const VectorXd& sup,
                       const VectorXd& rhs) {
  const Index n = diag.size();
  VectorXd c(n), d(n);
  double pivot = diag[0];
  if (pivot == 0.0) throw NonFiniteEvalError("tridiagonal solve: zero pivot");
  c[0] = sup[0] / pivot;
  d[0] = rhs[0] / pivot;
  for (Index i = 1; i < n; ++i) {
    pivot = diag[i] - sub[i] * c[i - 1];
    if (pivot == 0.0) throw NonFiniteEvalError("tridiagonal solve: zero pivot");
    c[i] = (i + 1 < n) ? sup[i] / pivot : 0.0;
    d[i] = (rhs[i] - sub[i] * d[i - 1]) / pivot;
  }
  for (Index i = n - 2; i >= 0; --i) d[i] -= c[i] * d[i + 1];
  return d;
}

// Solve A^T x = rhs given the diagonals of A.
VectorXd tridiag_solve_transpose(const VectorXd& sub, const VectorXd& diag,
                                 const VectorXd& sup, const VectorXd& rhs) {
  const Index n = diag.size();
  VectorXd tsub(n), tsup(n);
  tsub[0] = 0.0;
  tsup[n - 1] = 0.0;
  for (Index i = 1; i < n; ++i) tsub[i] = sup[i - 1];
  for (Index i = 0; i + 1 < n; ++i) tsup[i] = sub[i + 1];
  return tridiag_solve(tsub, diag, tsup, rhs);
}

}  // namespace

// ---------------------------------------------------------------------------
// Prior factor

EllipticPriorFactor::EllipticPriorFactor(Index n)
    : n_(n), root_n_(std::sqrt(static_cast<double>(n))) {
  if (n < 2) throw std::invalid_argument("EllipticPriorFactor: need n >= 2");
}

VectorXd EllipticPriorFactor::solve(const VectorXd& b) const {
  // S^{-1} b: first row couples the two endpoints, the rest are differences.
  VectorXd out(n_);
  const double n = static_cast<double>(n_);
  out[0] = n * (b[0] + b[n_ - 1]);
  for (Index i = 1; i < n_; ++i) out[i] = root_n_ * (b[i] - b[i - 1]);
  return out;
}

VectorXd EllipticPriorFactor::solve_transpose(const VectorXd& b) const {
  VectorXd out(n_);
  const double n = static_cast<double>(n_);
  out[0] = n * b[0] - root_n_ * b[1];
  for (Index i = 1; i + 1 < n_; ++i) out[i] = root_n_ * (b[i] - b[i + 1]);
  out[n_ - 1] = n * b[0] + root_n_ * b[n_ - 1];
  return out;
}

VectorXd EllipticPriorFactor::apply(const VectorXd& x) const {
  // Solve S^{-1} u = x by cumulative sums; the corner entry fixes u[0].
  VectorXd out(n_);
  const double n = static_cast<double>(n_);
  double tail = 0.0;
  for (Index i = 1; i < n_; ++i) tail += x[i];
  out[0] = (x[0] - root_n_ * tail) / (2.0 * n);
  double acc = out[0];
  for (Index i = 1; i < n_; ++i) {
    acc += x[i] / root_n_;
    out[i] = acc;
  }
  return out;
}

VectorXd EllipticPriorFactor::apply_transpose(const VectorXd& x) const {
  // Solve S^{-T} u = x; summing all rows isolates u[0], then back-substitute.
  VectorXd out(n_);
  const double n = static_cast<double>(n_);
  out[0] = x.sum() / (2.0 * n);
  out[n_ - 1] = (x[n_ - 1] - n * out[0]) / root_n_;
  for (Index i = n_ - 2; i >= 1; --i) out[i] = out[i + 1] + x[i] / root_n_;
  return out;
}

// ---------------------------------------------------------------------------
// Forward model

Elliptic1dModel::Elliptic1dModel(Index n) : Elliptic1dModel(n, VectorXd()) {
  source_ = elliptic_source(grid());
}

Elliptic1dModel::Elliptic1dModel(Index n, VectorXd source)
    : n_(n), h_(1.0 / static_cast<double>(n - 1)), source_(std::move(source)) {
  if (n < 11 || (n - 1) % 10 != 0)
    throw std::invalid_argument("Elliptic1dModel: n-1 must be divisible by 10");
  if (source_.size() == 0) source_ = VectorXd::Zero(n);
  if (source_.size() != n)
    throw std::invalid_argument("Elliptic1dModel: source must live on the grid");
  const Index stride = (n - 1) / 10;
  obs_.reserve(9);
  for (Index k = 1; k <= 9; ++k) obs_.push_back(k * stride);
}

VectorXd Elliptic1dModel::grid() const {
  return VectorXd::LinSpaced(n_, 0.0, 1.0);
}

Elliptic1dModel::Tridiag Elliptic1dModel::assemble(const VectorXd& kappa) const {
  Tridiag t;
  t.sub.setZero(n_);
  t.diag.setZero(n_);
  t.sup.setZero(n_);
  const double inv_h = 1.0 / h_;
  const double inv_h2 = inv_h * inv_h;
  // Half-cell flux balance at the left boundary.
  const double k_half0 = 0.5 * (kappa[0] + kappa[1]);
  t.diag[0] = k_half0 * inv_h;
  t.sup[0] = -k_half0 * inv_h;
  for (Index j = 1; j + 1 < n_; ++j) {
    const double k_lo = 0.5 * (kappa[j - 1] + kappa[j]);
    const double k_hi = 0.5 * (kappa[j] + kappa[j + 1]);
    t.sub[j] = -k_lo * inv_h2;
    t.diag[j] = (k_lo + k_hi) * inv_h2;
    t.sup[j] = -k_hi * inv_h2;
  }
  t.diag[n_ - 1] = 1.0;  // Dirichlet row, p(1) = 1
  return t;
}

VectorXd Elliptic1dModel::rhs() const {
  VectorXd b = source_;
  b[0] = 0.5 * h_ * source_[0] + 1.0;  // influx enters the half-cell balance
  b[n_ - 1] = 1.0;
  return b;
}

VectorXd Elliptic1dModel::solve_field_kappa(const VectorXd& kappa) const {
  if (!kappa.allFinite() || kappa.minCoeff() <= 0.0)
    throw NonFiniteEvalError("elliptic solve: diffusivity must be finite and positive");
  const Tridiag t = assemble(kappa);
  return tridiag_solve(t.sub, t.diag, t.sup, rhs());
}

VectorXd Elliptic1dModel::solve_field(const VectorXd& u) const {
  return solve_field_kappa(kappa_from_log(u));
}

VectorXd Elliptic1dModel::eval(const VectorXd& u) const {
  const VectorXd p = solve_field(u);
  VectorXd out(9);
  for (Index k = 0; k < 9; ++k) out[k] = p[obs_[k]];
  return out;
}

VectorXd Elliptic1dModel::jvp(const VectorXd& u, const VectorXd& du) const {
  const VectorXd kappa = kappa_from_log(u);
  const Tridiag t = assemble(kappa);
  const VectorXd p = tridiag_solve(t.sub, t.diag, t.sup, rhs());

  // dkappa from the chain rule through kappa = 1.5 exp(u) + 0.1.
  VectorXd dkappa = (kappa.array() - 0.1) * du.array();

  // (dA) p with the same stencil, evaluated at dkappa.
  const double inv_h = 1.0 / h_;
  const double inv_h2 = inv_h * inv_h;
  VectorXd dap = VectorXd::Zero(n_);
  dap[0] = 0.5 * (dkappa[0] + dkappa[1]) * (p[0] - p[1]) * inv_h;
  for (Index j = 1; j + 1 < n_; ++j) {
    const double dk_lo = 0.5 * (dkappa[j - 1] + dkappa[j]);
    const double dk_hi = 0.5 * (dkappa[j] + dkappa[j + 1]);
    dap[j] = (dk_lo * (p[j] - p[j - 1]) - dk_hi * (p[j + 1] - p[j])) * inv_h2;
  }

  const VectorXd dp = tridiag_solve(t.sub, t.diag, t.sup, dap);
  VectorXd out(9);
  for (Index k = 0; k < 9; ++k) out[k] = -dp[obs_[k]];
  return out;
}

VectorXd Elliptic1dModel::vjp(const VectorXd& u, const VectorXd& dy) const {
  const VectorXd kappa = kappa_from_log(u);
  const Tridiag t = assemble(kappa);
  const VectorXd p = tridiag_solve(t.sub, t.diag, t.sup, rhs());

  VectorXd rhs_adj = VectorXd::Zero(n_);
  for (Index k = 0; k < 9; ++k) rhs_adj[obs_[k]] += dy[k];
  const VectorXd w = tridiag_solve_transpose(t.sub, t.diag, t.sup, rhs_adj);

  // Per-interface sensitivity of w^T A(kappa) p, then average onto the nodes.
  const double inv_h = 1.0 / h_;
  const double inv_h2 = inv_h * inv_h;
  VectorXd iface = VectorXd::Zero(n_ - 1);
  iface[0] = w[0] * (p[0] - p[1]) * inv_h;
  for (Index i = 0; i + 1 <= n_ - 2; ++i) iface[i] += w[i + 1] * (p[i + 1] - p[i]) * inv_h2;
  for (Index i = 1; i <= n_ - 2; ++i) iface[i] -= w[i] * (p[i + 1] - p[i]) * inv_h2;

  VectorXd grad_kappa = VectorXd::Zero(n_);
  for (Index i = 0; i + 1 < n_; ++i) {
    grad_kappa[i] += 0.5 * iface[i];
    grad_kappa[i + 1] += 0.5 * iface[i];
  }

  return -(grad_kappa.array() * (kappa.array() - 0.1)).matrix();
}

// ---------------------------------------------------------------------------
// Problem setup

VectorXd kappa_from_log(const VectorXd& u) {
  return (1.5 * u.array().exp() + 0.1).matrix();
}

VectorXd elliptic_true_kappa(const VectorXd& x) {
  return (1.0 + 2.0 * (-(x.array() - 0.5).square() / (2.0 * 0.15 * 0.15)).exp()).matrix();
}

VectorXd elliptic_source(const VectorXd& x) {
  const double s = 10.0, w = 0.05;
  auto bump = [&](double center) {
    return (-(x.array() - center).square() / (2.0 * w * w)).exp();
  };
  return (s * (bump(0.3) - bump(0.7))).matrix();
}

VectorXd elliptic_generate_data(double sigma, uint64_t seed) {
  if (sigma <= 0.0) throw std::invalid_argument("elliptic data: sigma must be positive");
  const Index n_data_mesh = 151;
  Elliptic1dModel fine(n_data_mesh);
  const VectorXd kappa = elliptic_true_kappa(fine.grid());
  const VectorXd p = fine.solve_field_kappa(kappa);
  VectorXd y(9);
  const auto& idx = fine.observation_indices();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index k = 0; k < 9; ++k) y[k] = p[idx[k]] + sigma * normal(rng);
  return y;
}

BayesProblem elliptic_problem(Index n, double sigma, uint64_t data_seed) {
  if (n == 151)
    throw ConfigError("elliptic problem: n = 151 is the data-generation mesh (inverse crime)");
  BayesProblem prob;
  prob.forward = std::make_shared<Elliptic1dModel>(n);
  prob.data = elliptic_generate_data(sigma, data_seed);
  prob.prior_mean = VectorXd::Zero(n);
  prob.prior_factor = std::make_shared<EllipticPriorFactor>(n);
  prob.obs_factor = std::make_shared<ScaledIdentityFactor>(9, sigma);
  return prob;
}

}  // namespace rto
