#include "rto/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rto/errors.hpp"
#include "rto/rng.hpp"

namespace rto {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Chain metropolize(const std::vector<Proposal>& proposals, const VectorXd& v0, double logw0,
                  uint64_t seed) {
  if (proposals.empty()) throw std::invalid_argument("metropolize: empty proposal list");

  Chain chain;
  chain.seed = seed;
  const size_t n = proposals.size();
  chain.states.reserve(n);
  chain.accepted.reserve(n);
  chain.log_weights.reserve(n);

  std::mt19937_64 rng = substream(seed, 0, kAcceptStream);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  VectorXd current = v0;
  double current_logw = logw0;
  for (const Proposal& prop : proposals) {
    const double t = uniform(rng);  // consumed every step to keep streams aligned
    bool accept = false;
    if (prop.valid) accept = std::log(t) < prop.log_weight - current_logw;
    if (accept) {
      current = prop.v;
      current_logw = prop.log_weight;
    }
    chain.states.push_back(current);
    chain.accepted.push_back(accept ? 1 : 0);
    chain.log_weights.push_back(current_logw);

    chain.costs.residual_evals += prop.solve_report.residual_evals;
    chain.costs.jvp_evals += prop.solve_report.jvp_evals;
    chain.costs.vjp_evals += prop.solve_report.vjp_evals;
    chain.costs.opt_iterations += prop.solve_report.iterations;
  }
  return chain;
}

VectorXd normalize_log_weights(const std::vector<double>& log_weights) {
  if (log_weights.empty()) throw std::invalid_argument("normalize_log_weights: empty input");
  double max_lw = kNegInf;
  for (double lw : log_weights) max_lw = std::max(max_lw, lw);
  if (!std::isfinite(max_lw))
    throw std::invalid_argument("normalize_log_weights: all weights are zero");

  VectorXd w(static_cast<Index>(log_weights.size()));
  for (Index i = 0; i < w.size(); ++i) {
    const double lw = log_weights[static_cast<size_t>(i)];
    w[i] = std::isfinite(lw) ? std::exp(lw - max_lw) : 0.0;
  }
  w /= w.sum();
  return w;
}

WeightedSamples weighted_samples(const std::vector<Proposal>& proposals) {
  std::vector<double> lw;
  lw.reserve(proposals.size());
  WeightedSamples ws;
  ws.samples.reserve(proposals.size());
  for (const Proposal& p : proposals) {
    lw.push_back(p.valid ? p.log_weight : kNegInf);
    ws.samples.push_back(p.v);
  }
  ws.weights = normalize_log_weights(lw);
  return ws;
}

double is_estimate(const WeightedSamples& ws, const std::function<double(const VectorXd&)>& g) {
  double acc = 0.0;
  for (size_t i = 0; i < ws.samples.size(); ++i) {
    const double w = ws.weights[static_cast<Index>(i)];
    if (w > 0.0) acc += w * g(ws.samples[i]);
  }
  return acc;
}

Chain pcn_chain(const WhitenedProblem& wp, double beta, int steps, const VectorXd& v0,
                uint64_t seed) {
  if (!(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("pcn_chain: beta must be in (0, 1]");

  Chain chain;
  chain.seed = seed;
  chain.states.reserve(steps);
  chain.accepted.reserve(steps);
  chain.log_weights.reserve(steps);

  std::mt19937_64 rng = substream(seed, 0, kChainStream);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const double keep = std::sqrt(1.0 - beta * beta);
  VectorXd v = v0;
  double misfit = -0.5 * wp.G(v).squaredNorm();
  for (int k = 0; k < steps; ++k) {
    const VectorXd xi = standard_normal(rng, wp.n());
    const VectorXd cand = keep * v + beta * xi;
    const double cand_misfit = -0.5 * wp.G(cand).squaredNorm();
    const double t = uniform(rng);
    const bool accept = std::log(t) < cand_misfit - misfit;
    if (accept) {
      v = cand;
      misfit = cand_misfit;
    }
    chain.states.push_back(v);
    chain.accepted.push_back(accept ? 1 : 0);
    chain.log_weights.push_back(misfit);
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Implicit sampling

Proposal implicit_propose(const std::function<double(const VectorXd&)>& ell,
                          const VectorXd& v_map,
                          const std::function<VectorXd(const VectorXd&)>& l_apply,
                          const VectorXd& xi, const ImplicitOptions& opts) {
  Proposal prop;
  prop.noise = xi;
  const Index n = v_map.size();
  const double xi_norm2 = xi.squaredNorm();

  if (xi_norm2 == 0.0) {
    prop.v = v_map;
    prop.log_weight = 0.0;  // limit of the ray-map weight as xi -> 0
    prop.valid = true;
    return prop;
  }

  const double ell0 = ell(v_map);
  const VectorXd direction = l_apply(xi);
  auto level = [&](double alpha) { return ell(v_map + alpha * direction) - ell0 - 0.5 * xi_norm2; };

  // Bracket the level crossing along the ray, then bisect.
  double lo = 0.0, hi = 1.0;
  double f_hi = level(hi);
  int doublings = 0;
  while (f_hi < 0.0) {
    if (++doublings > opts.max_doublings) {
      prop.v = v_map + hi * direction;
      return prop;  // invalid: level never reached within budget
    }
    lo = hi;
    hi *= 2.0;
    f_hi = level(hi);
    if (!std::isfinite(f_hi)) {
      prop.v = v_map + hi * direction;
      return prop;
    }
  }

  double alpha = hi, f_mid = f_hi;
  for (int it = 0; it < opts.max_bisections; ++it) {
    alpha = 0.5 * (lo + hi);
    f_mid = level(alpha);
    if (std::abs(f_mid) <= opts.level_tol || hi - lo <= 1e-16 * std::max(1.0, hi)) break;
    if (f_mid < 0.0)
      lo = alpha;
    else
      hi = alpha;
  }

  prop.v = v_map + alpha * direction;

  // Directional derivative of ell along the ray, for the pushforward density.
  const double h = 1e-6 * std::max(1.0, alpha);
  const double slope = (ell(v_map + (alpha + h) * direction) -
                        ell(v_map + (alpha - h) * direction)) /
                       (2.0 * h);
  if (slope <= 0.0) return prop;  // not a transversal crossing; reject

  prop.log_weight = (static_cast<double>(n) - 1.0) * std::log(alpha) + std::log(xi_norm2) -
                    std::log(slope);
  prop.valid = std::isfinite(prop.log_weight);
  return prop;
}

// ---------------------------------------------------------------------------
// Randomized maximum likelihood

SolveOptions default_rml_options() {
  SolveOptions opts;
  opts.ftol = 1e-14;
  opts.gtol = 1e-10;
  opts.cg_tol = 1e-12;
  opts.max_iters = 500;
  return opts;
}

RmlProposal rml_propose(const WhitenedProblem& wp, double rho, const VectorXd& xi_v,
                        const VectorXd& xi_d, const SolveOptions& opts) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("rml_propose: rho must be in (0, 1)");
  const Index n = wp.n(), m = wp.m();
  const double s_mid = 1.0 / std::sqrt(rho);
  const double s_tail = 1.0 / std::sqrt(1.0 - rho);

  // Stacked least-squares formulation of the perturbed objective:
  //   1/2 ||v - xi_v||^2 + 1/(2 rho) ||G(v) - d||^2 + 1/(2(1-rho)) ||d - xi_d||^2.
  ResidualProblem sys;
  sys.residual = [&, s_mid, s_tail](const VectorXd& z) {
    VectorXd r(n + 2 * m);
    const VectorXd v = z.head(n);
    const VectorXd d = z.tail(m);
    r.head(n) = v - xi_v;
    r.segment(n, m) = s_mid * (wp.G(v) - d);
    r.tail(m) = s_tail * (d - xi_d);
    return r;
  };
  sys.jvp = [&, s_mid, s_tail](const VectorXd& z, const VectorXd& dz) {
    VectorXd r(n + 2 * m);
    const VectorXd v = z.head(n);
    const VectorXd dv = dz.head(n);
    const VectorXd dd = dz.tail(m);
    r.head(n) = dv;
    r.segment(n, m) = s_mid * (wp.jvp_G(v, dv) - dd);
    r.tail(m) = s_tail * dd;
    return r;
  };
  sys.vjp = [&, s_mid, s_tail](const VectorXd& z, const VectorXd& dr) {
    VectorXd out(n + m);
    const VectorXd v = z.head(n);
    out.head(n) = dr.head(n) + s_mid * wp.vjp_G(v, dr.segment(n, m));
    out.tail(m) = -s_mid * dr.segment(n, m) + s_tail * dr.tail(m);
    return out;
  };
  VectorXd start(n + m);
  start.head(n) = xi_v;
  start.tail(m) = xi_d;
  sys.start = start;

  RmlProposal prop;
  prop.solve_report = solve_nlls(sys, opts);
  prop.v = prop.solve_report.solution.head(n);
  prop.d = prop.solve_report.solution.tail(m);
  if (!prop.solve_report.converged) return prop;

  const auto [r1, r2] = rml_optimality_residuals(wp, rho, prop.v, prop.d, xi_v, xi_d);
  if (r1.norm() > 1e-8 || r2.norm() > 1e-8) return prop;

  prop.log_density = rml_log_density(wp, rho, prop.v, prop.d);
  prop.valid = std::isfinite(prop.log_density);
  return prop;
}

std::pair<VectorXd, VectorXd> rml_optimality_residuals(const WhitenedProblem& wp, double rho,
                                                       const VectorXd& v, const VectorXd& d,
                                                       const VectorXd& xi_v,
                                                       const VectorXd& xi_d) {
  const VectorXd g = wp.G(v);
  const VectorXd r1 = v + wp.vjp_G(v, (g - d) / rho) - xi_v;
  const VectorXd r2 = d / rho - ((1.0 - rho) / rho) * g - xi_d;
  return {r1, r2};
}

double rml_log_aug_target(const WhitenedProblem& wp, double gamma, const VectorXd& v,
                          const VectorXd& d) {
  const VectorXd g = wp.G(v);
  return -0.5 * v.squaredNorm() - 0.5 / gamma * (g - d).squaredNorm() -
         0.5 / (1.0 - gamma) * d.squaredNorm();
}

std::pair<VectorXd, VectorXd> rml_inverse_map(const WhitenedProblem& wp, double rho,
                                              const VectorXd& v, const VectorXd& d) {
  const VectorXd g = wp.G(v);
  VectorXd xi_v = v + wp.vjp_G(v, (g - d) / rho);
  VectorXd xi_d = d / rho - ((1.0 - rho) / rho) * g;
  return {xi_v, xi_d};
}

double rml_log_density(const WhitenedProblem& wp, double rho, const VectorXd& v,
                       const VectorXd& d) {
  const Index n = wp.n(), m = wp.m();
  const Index dim = n + m;

  auto inverse_stacked = [&](const VectorXd& z) {
    const auto [xi_v, xi_d] = rml_inverse_map(wp, rho, z.head(n), z.tail(m));
    VectorXd out(dim);
    out.head(n) = xi_v;
    out.tail(m) = xi_d;
    return out;
  };

  VectorXd z(dim);
  z.head(n) = v;
  z.tail(m) = d;

  // Jacobian of the inverse map by central differences (needs second-order
  // model information, which the forward interface does not expose).
  MatrixXd jac(dim, dim);
  const double h = 1e-6;
  VectorXd zp = z, zm = z;
  for (Index j = 0; j < dim; ++j) {
    const double step = h * std::max(1.0, std::abs(z[j]));
    zp[j] = z[j] + step;
    zm[j] = z[j] - step;
    jac.col(j) = (inverse_stacked(zp) - inverse_stacked(zm)) / (2.0 * step);
    zp[j] = z[j];
    zm[j] = z[j];
  }

  Eigen::PartialPivLU<MatrixXd> lu(jac);
  double logdet = 0.0;
  for (Index i = 0; i < dim; ++i) {
    const double diag = std::abs(lu.matrixLU()(i, i));
    if (diag == 0.0) return kNegInf;
    logdet += std::log(diag);
  }

  const VectorXd xi = inverse_stacked(z);
  return -0.5 * dim * std::log(2.0 * M_PI) - 0.5 * xi.squaredNorm() + logdet;
}

Chain rml_metropolize(const WhitenedProblem& wp, double gamma, double rho,
                      const std::vector<RmlProposal>& proposals, const VectorXd& v0,
                      const VectorXd& d0, uint64_t seed) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("rml_metropolize: gamma must be in (0, 1)");
  if (proposals.empty()) throw std::invalid_argument("rml_metropolize: empty proposal list");

  std::vector<Proposal> joint;
  joint.reserve(proposals.size());
  for (const RmlProposal& rp : proposals) {
    Proposal p;
    VectorXd z(rp.v.size() + rp.d.size());
    z.head(rp.v.size()) = rp.v;
    z.tail(rp.d.size()) = rp.d;
    p.v = std::move(z);
    p.valid = rp.valid;
    p.solve_report = rp.solve_report;
    if (rp.valid)
      p.log_weight = rml_log_aug_target(wp, gamma, rp.v, rp.d) - rp.log_density;
    joint.push_back(std::move(p));
  }

  VectorXd z0(v0.size() + d0.size());
  z0.head(v0.size()) = v0;
  z0.tail(d0.size()) = d0;
  const double logw0 = rml_log_aug_target(wp, gamma, v0, d0) - rml_log_density(wp, rho, v0, d0);
  return metropolize(joint, z0, logw0, seed);
}

}  // namespace rto
