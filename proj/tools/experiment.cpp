#include "experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "rto/elliptic.hpp"
#include "rto/errors.hpp"
#include "rto/models.hpp"
#include "rto/proposal.hpp"
#include "rto/rng.hpp"

namespace rtotool {

using namespace rto;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config plumbing

json ExperimentConfig::to_json() const {
  return json{{"model", model},
              {"n", n},
              {"linear_m", linear_m},
              {"sigma", sigma},
              {"data_seed", data_seed},
              {"sampler", sampler},
              {"tau", tau},
              {"pcn_beta", pcn_beta},
              {"pcn_tune", pcn_tune},
              {"pcn_beta_grid", pcn_beta_grid},
              {"pcn_steps", pcn_steps},
              {"rml_rho", rml_rho},
              {"rml_gamma", rml_gamma},
              {"chain_length", chain_length},
              {"ftol", ftol},
              {"seed", seed},
              {"workers", workers},
              {"out_dir", out_dir},
              {"save_states", save_states},
              {"dims", dims},
              {"sigmas", sigmas},
              {"thresholds", thresholds},
              {"standard_chain_length", standard_chain_length},
              {"grid_points", grid_points},
              {"version", kVersionTag}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  auto get = [&j](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("model", cfg.model);
  get("n", cfg.n);
  get("linear_m", cfg.linear_m);
  get("sigma", cfg.sigma);
  get("data_seed", cfg.data_seed);
  get("sampler", cfg.sampler);
  get("tau", cfg.tau);
  get("pcn_beta", cfg.pcn_beta);
  get("pcn_tune", cfg.pcn_tune);
  get("pcn_beta_grid", cfg.pcn_beta_grid);
  get("pcn_steps", cfg.pcn_steps);
  get("rml_rho", cfg.rml_rho);
  get("rml_gamma", cfg.rml_gamma);
  get("chain_length", cfg.chain_length);
  get("ftol", cfg.ftol);
  get("seed", cfg.seed);
  get("workers", cfg.workers);
  get("out_dir", cfg.out_dir);
  get("save_states", cfg.save_states);
  get("dims", cfg.dims);
  get("sigmas", cfg.sigmas);
  get("thresholds", cfg.thresholds);
  get("standard_chain_length", cfg.standard_chain_length);
  get("grid_points", cfg.grid_points);
  return cfg;
}

void ExperimentConfig::apply_model_defaults() {
  if (sigma == 0.0) {
    if (model == "toy2d")
      sigma = 1.5;  // keeps the toy transport injective on the diagnostic box
    else if (model == "linear")
      sigma = 0.5;
    else
      sigma = 1e-2;
  }
}

void ExperimentConfig::validate() const {
  const std::vector<std::string> models = {"elliptic", "toy2d", "linear"};
  const std::vector<std::string> samplers = {"rto-standard", "rto-scalable", "pcn",
                                             "implicit", "rml", "importance"};
  auto in = [](const auto& list, const std::string& x) {
    return std::find(list.begin(), list.end(), x) != list.end();
  };
  if (!in(models, model)) throw ConfigError("unknown model: " + model);
  if (!in(samplers, sampler)) throw ConfigError("unknown sampler: " + sampler);
  if (sigma <= 0.0) throw ConfigError("sigma must be positive");
  if (chain_length < 1) throw ConfigError("chain_length must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (tau < 0.0) throw ConfigError("tau must be nonnegative");
  if (!(pcn_beta > 0.0 && pcn_beta <= 1.0)) throw ConfigError("pcn_beta must be in (0, 1]");
  if (!(rml_rho > 0.0 && rml_rho < 1.0)) throw ConfigError("rml_rho must be in (0, 1)");
  if (!(rml_gamma > 0.0 && rml_gamma < 1.0)) throw ConfigError("rml_gamma must be in (0, 1)");
  if (ftol <= 0.0) throw ConfigError("ftol must be positive");
  if (model == "elliptic" && (n < 11 || (n - 1) % 10 != 0))
    throw ConfigError("elliptic model needs n-1 divisible by 10");
  if (model == "elliptic" && n == 151)
    throw ConfigError("n = 151 is reserved for data generation (inverse crime)");
  for (size_t i = 1; i < dims.size(); ++i)
    if (dims[i] <= dims[i - 1]) throw ConfigError("dims must be ascending");
  for (size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] >= thresholds[i - 1]) throw ConfigError("thresholds must be descending");
  for (double s : sigmas)
    if (s <= 0.0) throw ConfigError("sigmas must be positive");
}

// ---------------------------------------------------------------------------
// Problem construction

namespace {

struct BuiltProblem {
  WhitenedProblem wp;
  std::shared_ptr<CountingModel> counter;
};

BuiltProblem build_problem(const ExperimentConfig& cfg) {
  BayesProblem prob;
  if (cfg.model == "elliptic") {
    prob = elliptic_problem(cfg.n, cfg.sigma, cfg.data_seed);
  } else if (cfg.model == "toy2d") {
    prob = toy2d_problem(cfg.sigma);
  } else {
    prob = random_linear_problem(cfg.n, cfg.linear_m, cfg.data_seed);
    prob.obs_factor = std::make_shared<ScaledIdentityFactor>(cfg.linear_m, cfg.sigma);
  }
  auto counter = std::make_shared<CountingModel>(prob.forward);
  prob.forward = counter;
  return BuiltProblem{whiten(std::move(prob)), counter};
}

SolveOptions proposal_options(const ExperimentConfig& cfg) {
  SolveOptions opts = default_proposal_options();
  opts.ftol = cfg.ftol;
  return opts;
}

// Parallel map over indices with per-index RNG substreams.
template <typename Fn>
void parallel_indices(int count, int workers, Fn&& fn) {
  std::atomic<int> next{0};
  auto work = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) break;
      fn(i);
    }
  };
  if (workers <= 1) {
    work();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
}

Chain drop_burn_in(const Chain& chain, double fraction) {
  const size_t skip = static_cast<size_t>(fraction * chain.states.size());
  Chain out;
  out.seed = chain.seed;
  out.costs = chain.costs;
  out.propose_seconds = chain.propose_seconds;
  out.metropolize_seconds = chain.metropolize_seconds;
  out.states.assign(chain.states.begin() + skip, chain.states.end());
  out.accepted.assign(chain.accepted.begin() + skip, chain.accepted.end());
  out.log_weights.assign(chain.log_weights.begin() + skip, chain.log_weights.end());
  return out;
}

bool pcn_flagged_nonconverged(const ChainStats& stats) {
  return stats.acceptance_rate < 0.01 || stats.ess_median < 10.0 || stats.degenerate;
}

RunResult run_pcn(const ExperimentConfig& cfg, const BuiltProblem& built) {
  RunResult result;
  const WhitenedProblem& wp = built.wp;

  auto t_ref = Clock::now();
  SolveOptions ref_opts = default_reference_options();
  ref_opts.ftol = cfg.ftol;
  const VectorXd v_ref = find_reference(wp, ref_opts);
  result.reference_seconds = seconds_since(t_ref);

  double beta = cfg.pcn_beta;
  if (cfg.pcn_tune) {
    // Pilot chains per candidate step size; pick the best post-burn-in ESS.
    const long pilot = std::max<long>(10000, cfg.pcn_steps / 10);
    double best_score = -1.0;
    for (double cand : cfg.pcn_beta_grid) {
      const Chain pilot_chain = pcn_chain(wp, cand, pilot, v_ref, cfg.seed ^ 0xabcdu);
      const ChainStats st = chain_stats(drop_burn_in(pilot_chain, 0.5));
      const double score = st.degenerate ? 0.0 : st.ess_median;
      if (score > best_score) {
        best_score = score;
        beta = cand;
      }
    }
  }
  result.tuned_pcn_beta = beta;

  auto t0 = Clock::now();
  result.chain = pcn_chain(wp, beta, cfg.pcn_steps, v_ref, cfg.seed);
  result.chain.propose_seconds = seconds_since(t0);

  result.stats = chain_stats(drop_burn_in(result.chain, 0.5));
  result.pcn_nonconverged = pcn_flagged_nonconverged(result.stats);
  return result;
}

RunResult run_rml(const ExperimentConfig& cfg, const BuiltProblem& built) {
  RunResult result;
  const WhitenedProblem& wp = built.wp;
  const Index n = wp.n(), m = wp.m();

  auto t_ref = Clock::now();
  SolveOptions ref_opts = default_reference_options();
  ref_opts.ftol = cfg.ftol;
  const VectorXd v_ref = find_reference(wp, ref_opts);
  result.reference_seconds = seconds_since(t_ref);

  std::vector<RmlProposal> proposals(cfg.chain_length);
  auto t0 = Clock::now();
  parallel_indices(static_cast<int>(cfg.chain_length), cfg.workers, [&](int i) {
    std::mt19937_64 rng = substream(cfg.seed, static_cast<uint64_t>(i), kProposalStream);
    const VectorXd xi_v = standard_normal(rng, n);
    const VectorXd xi_d = standard_normal(rng, m);
    proposals[i] = rml_propose(wp, cfg.rml_rho, xi_v, xi_d);
  });
  const double propose_seconds = seconds_since(t0);

  const VectorXd d0 = (1.0 - cfg.rml_gamma) * wp.G(v_ref);
  auto t1 = Clock::now();
  Chain joint = rml_metropolize(wp, cfg.rml_gamma, cfg.rml_rho, proposals, v_ref, d0, cfg.seed);
  joint.metropolize_seconds = seconds_since(t1);
  joint.propose_seconds = propose_seconds;

  // Report the v-marginal; the auxiliary data block is an implementation
  // detail of the augmented-space construction.
  Chain marginal;
  marginal.seed = joint.seed;
  marginal.costs = joint.costs;
  marginal.propose_seconds = joint.propose_seconds;
  marginal.metropolize_seconds = joint.metropolize_seconds;
  marginal.accepted = joint.accepted;
  marginal.log_weights = joint.log_weights;
  marginal.states.reserve(joint.states.size());
  for (const VectorXd& z : joint.states) marginal.states.push_back(z.head(n));
  for (const auto& p : proposals)
    if (!p.valid) ++result.invalid_proposals;

  result.chain = std::move(marginal);
  result.stats = chain_stats(result.chain);
  return result;
}

RunResult run_implicit(const ExperimentConfig& cfg, const BuiltProblem& built) {
  RunResult result;
  const WhitenedProblem& wp = built.wp;
  const Index n = wp.n();

  auto t_ref = Clock::now();
  SolveOptions ref_opts = default_reference_options();
  ref_opts.ftol = cfg.ftol;
  const VectorXd v_ref = find_reference(wp, ref_opts);
  result.reference_seconds = seconds_since(t_ref);

  // Gauss-Newton Hessian factor at the mode through the SVD of dG:
  // L = Phi (Lambda^2+I)^{-1/2} Phi^T + (I - Phi Phi^T) gives
  // L^T L = (I + dG^T dG)^{-1}.
  auto t_basis = Clock::now();
  const SvdBasis basis = build_svd_basis(wp, v_ref, 0.0);
  result.basis_seconds = seconds_since(t_basis);
  result.basis_rank = basis.rank();
  const VectorXd damp = (basis.lambda.array().square() + 1.0).rsqrt().matrix();
  auto l_apply = [&](const VectorXd& x) {
    const VectorXd px = basis.phi.transpose() * x;
    return (x + basis.phi * ((damp.array() - 1.0).matrix().asDiagonal() * px)).eval();
  };
  auto ell = [&](const VectorXd& v) { return -wp.log_target(v); };

  std::vector<Proposal> proposals(cfg.chain_length);
  auto t0 = Clock::now();
  parallel_indices(static_cast<int>(cfg.chain_length), cfg.workers, [&](int i) {
    std::mt19937_64 rng = substream(cfg.seed, static_cast<uint64_t>(i), kProposalStream);
    proposals[i] = implicit_propose(ell, v_ref, l_apply, standard_normal(rng, n));
  });
  const double propose_seconds = seconds_since(t0);

  auto t1 = Clock::now();
  // Weight of the chain start: the xi -> 0 limit of the ray-map weight.
  result.chain = metropolize(proposals, v_ref, 0.0, cfg.seed);
  result.chain.metropolize_seconds = seconds_since(t1);
  result.chain.propose_seconds = propose_seconds;
  for (const auto& p : proposals)
    if (!p.valid) ++result.invalid_proposals;

  result.stats = chain_stats(result.chain);
  return result;
}

RunResult run_rto(const ExperimentConfig& cfg, const BuiltProblem& built) {
  RunResult result;
  const WhitenedProblem& wp = built.wp;
  const SolveOptions popts = proposal_options(cfg);

  auto t_ref = Clock::now();
  SolveOptions ref_opts = default_reference_options();
  ref_opts.ftol = cfg.ftol;
  const VectorXd v_ref = find_reference(wp, ref_opts);
  result.reference_seconds = seconds_since(t_ref);

  const int count = static_cast<int>(cfg.chain_length);
  std::vector<Proposal> proposals;
  double logw0 = 0.0;

  if (cfg.sampler == "rto-standard") {
    auto t_basis = Clock::now();
    const QrBasis basis = build_qr_basis(wp, v_ref);
    result.basis_seconds = seconds_since(t_basis);
    result.basis_rank = wp.n();
    auto t0 = Clock::now();
    proposals = sample_proposals(wp, basis, count, cfg.seed, cfg.workers, popts);
    result.chain.propose_seconds = seconds_since(t0);
    logw0 = weight_standard(wp, basis, v_ref);
  } else {  // rto-scalable or importance
    auto t_basis = Clock::now();
    const SvdBasis basis = build_svd_basis(wp, v_ref, cfg.tau);
    result.basis_seconds = seconds_since(t_basis);
    result.basis_rank = basis.rank();
    auto t0 = Clock::now();
    proposals = sample_proposals(wp, basis, count, cfg.seed, cfg.workers, popts);
    result.chain.propose_seconds = seconds_since(t0);
    logw0 = weight_scalable(wp, basis, v_ref);
  }

  for (const auto& p : proposals)
    if (!p.valid) ++result.invalid_proposals;

  if (cfg.sampler == "importance") {
    // Self-normalized importance sampling: no Metropolis pass. The "chain"
    // records the raw proposals with their log-weights.
    const double propose_seconds = result.chain.propose_seconds;
    Chain chain;
    chain.seed = cfg.seed;
    chain.propose_seconds = propose_seconds;
    for (const auto& p : proposals) {
      chain.states.push_back(p.v);
      chain.accepted.push_back(1);
      chain.log_weights.push_back(p.valid ? p.log_weight
                                          : -std::numeric_limits<double>::infinity());
      chain.costs.residual_evals += p.solve_report.residual_evals;
      chain.costs.jvp_evals += p.solve_report.jvp_evals;
      chain.costs.vjp_evals += p.solve_report.vjp_evals;
      chain.costs.opt_iterations += p.solve_report.iterations;
    }
    result.chain = std::move(chain);
    result.stats = chain_stats(result.chain);
    const VectorXd w = normalize_log_weights(result.chain.log_weights);
    result.is_effective_samples = 1.0 / w.squaredNorm();
    // Weighted moments are the meaningful summary for importance sampling.
    VectorXd mean = VectorXd::Zero(wp.n());
    for (Index i = 0; i < w.size(); ++i) mean += w[i] * result.chain.states[i];
    result.stats.mean = mean;
    return result;
  }

  const double propose_seconds = result.chain.propose_seconds;
  auto t1 = Clock::now();
  result.chain = metropolize(proposals, v_ref, logw0, cfg.seed);
  result.chain.metropolize_seconds = seconds_since(t1);
  result.chain.propose_seconds = propose_seconds;
  result.stats = chain_stats(result.chain);
  return result;
}

}  // namespace

RunResult run_sampler(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.apply_model_defaults();
  cfg.validate();
  const BuiltProblem built = build_problem(cfg);
  RunResult result;
  if (cfg.sampler == "pcn") {
    result = run_pcn(cfg, built);
  } else if (cfg.sampler == "rml") {
    result = run_rml(cfg, built);
  } else if (cfg.sampler == "implicit") {
    result = run_implicit(cfg, built);
  } else {
    result = run_rto(cfg, built);
  }
  result.model_evals = built.counter->evals();
  result.model_jvps = built.counter->jvps() + built.counter->vjps();
  return result;
}

// ---------------------------------------------------------------------------
// Output writers

namespace {

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

void write_config_echo(const ExperimentConfig& cfg) {
  std::ofstream out(fs::path(cfg.out_dir) / "config-echo.json");
  out << cfg.to_json().dump(2) << "\n";
}

void write_chain_csv(const ExperimentConfig& cfg, const Chain& chain) {
  std::ofstream out(fs::path(cfg.out_dir) / "chain.csv");
  out << "step,accepted,log_weight";
  const Index dim = chain.states.empty() ? 0 : chain.states.front().size();
  if (cfg.save_states)
    for (Index c = 0; c < dim; ++c) out << ",v" << c;
  out << "\n";
  char buf[64];
  for (Index k = 0; k < chain.length(); ++k) {
    out << k << "," << int(chain.accepted[k]) << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", chain.log_weights[k]);
    out << buf;
    if (cfg.save_states) {
      for (Index c = 0; c < dim; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", chain.states[k][c]);
        out << "," << buf;
      }
    }
    out << "\n";
  }
}

json vector_to_json(const VectorXd& v) {
  std::vector<double> out(v.data(), v.data() + v.size());
  return json(out);
}

json stats_to_json(const ExperimentConfig& cfg, const RunResult& result) {
  const ChainStats& st = result.stats;
  json j;
  j["version"] = kVersionTag;
  j["model"] = cfg.model;
  j["sampler"] = cfg.sampler;
  j["n"] = result.chain.states.empty() ? cfg.n : result.chain.states.front().size();
  j["sigma"] = cfg.sigma;
  j["seed"] = cfg.seed;
  j["chain_length"] = st.length;
  j["acceptance_rate"] = st.acceptance_rate;
  j["ess_median"] = st.ess_median;
  j["ess_min"] = st.ess_per_coord.size() ? st.ess_per_coord.minCoeff() : 0.0;
  j["ess_max"] = st.ess_per_coord.size() ? st.ess_per_coord.maxCoeff() : 0.0;
  j["degenerate"] = st.degenerate;
  j["mean"] = vector_to_json(st.mean);
  j["variance"] = vector_to_json(st.variance);
  j["q05"] = vector_to_json(st.q05);
  j["q95"] = vector_to_json(st.q95);
  j["costs"] = {{"residual_evals", st.costs.residual_evals},
                {"jvp_evals", st.costs.jvp_evals},
                {"vjp_evals", st.costs.vjp_evals},
                {"opt_iterations", st.costs.opt_iterations},
                {"mean_opt_iterations_per_step",
                 double(st.costs.opt_iterations) / std::max<Index>(st.length, 1)}};
  j["model_counters"] = {{"forward_evals", result.model_evals},
                         {"jacobian_actions", result.model_jvps}};
  j["timing"] = {{"reference_seconds", result.reference_seconds},
                 {"basis_seconds", result.basis_seconds},
                 {"propose_seconds", result.chain.propose_seconds},
                 {"metropolize_seconds", result.chain.metropolize_seconds}};
  j["basis_rank"] = result.basis_rank;
  j["invalid_proposals"] = result.invalid_proposals;
  json warnings = json::array();
  if (result.invalid_proposals * 2 > cfg.chain_length)
    warnings.push_back("more than half of the proposal solves failed");
  j["warnings"] = warnings;
  if (cfg.sampler == "pcn")
    j["pcn"] = {{"beta", result.tuned_pcn_beta},
                {"tuned", cfg.pcn_tune},
                {"nonconverged", result.pcn_nonconverged}};
  if (cfg.sampler == "importance") j["is_effective_samples"] = result.is_effective_samples;
  return j;
}

void write_stats(const ExperimentConfig& cfg, const RunResult& result) {
  std::ofstream out(fs::path(cfg.out_dir) / "stats.json");
  out << stats_to_json(cfg, result).dump(2) << "\n";
}

struct CsvWriter {
  std::ofstream out;
  explicit CsvWriter(const fs::path& path, const std::string& header) : out(path) {
    out << header << "\n";
  }
  template <typename... Args>
  void row(Args... args) {
    bool first = true;
    auto emit = [&](auto value) {
      if (!first) out << ",";
      first = false;
      if constexpr (std::is_floating_point_v<decltype(value)>) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12g", value);
        out << buf;
      } else {
        out << value;
      }
    };
    (emit(args), ...);
    out << "\n";
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// Subcommands

int cmd_sample(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_config_echo(cfg);
  const RunResult result = run_sampler(cfg);
  write_chain_csv(cfg, result.chain);
  write_stats(cfg, result);
  std::cout << "sampler=" << cfg.sampler << " model=" << cfg.model << " n=" << cfg.n
            << " acceptance=" << result.stats.acceptance_rate
            << " ess_median=" << result.stats.ess_median << "\n";
  return 0;
}

int cmd_dim_study(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_config_echo(cfg);
  CsvWriter csv(fs::path(cfg.out_dir) / "cpu_vs_dim.csv",
                "n,sampler,acceptance,ess_median,mean_opt_iters,seconds_per_proposal,"
                "seconds_per_ess,forward_evals_per_proposal,jacobian_actions_per_proposal");
  for (long n : cfg.dims) {
    for (const char* sampler : {"rto-scalable", "rto-standard"}) {
      ExperimentConfig run_cfg = cfg;
      run_cfg.n = n;
      run_cfg.sampler = sampler;
      if (std::string(sampler) == "rto-standard")
        run_cfg.chain_length = cfg.standard_chain_length;
      const RunResult result = run_sampler(run_cfg);
      const double per_prop = result.chain.propose_seconds / run_cfg.chain_length;
      const double total = result.reference_seconds + result.basis_seconds +
                           result.chain.propose_seconds +
                           result.chain.metropolize_seconds;
      csv.row(n, sampler, result.stats.acceptance_rate, result.stats.ess_median,
              double(result.stats.costs.opt_iterations) / run_cfg.chain_length, per_prop,
              total / result.stats.ess_median,
              double(result.model_evals) / run_cfg.chain_length,
              double(result.model_jvps) / run_cfg.chain_length);
      std::cout << "n=" << n << " " << sampler
                << " acceptance=" << result.stats.acceptance_rate
                << " s/proposal=" << per_prop << "\n";
    }
  }
  return 0;
}

int cmd_noise_study(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_config_echo(cfg);
  CsvWriter csv(fs::path(cfg.out_dir) / "cpu_vs_obs.csv",
                "sigma,acceptance,ess_median,mean_opt_iters,seconds_per_proposal,"
                "seconds_per_ess,forward_evals_per_proposal");
  for (double sigma : cfg.sigmas) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.sigma = sigma;
    run_cfg.sampler = "rto-scalable";
    const RunResult result = run_sampler(run_cfg);
    const double per_prop = result.chain.propose_seconds / run_cfg.chain_length;
    const double total = result.reference_seconds + result.basis_seconds +
                         result.chain.propose_seconds + result.chain.metropolize_seconds;
    csv.row(sigma, result.stats.acceptance_rate, result.stats.ess_median,
            double(result.stats.costs.opt_iterations) / run_cfg.chain_length, per_prop,
            total / result.stats.ess_median,
            double(result.model_evals) / run_cfg.chain_length);
    std::cout << "sigma=" << sigma << " acceptance=" << result.stats.acceptance_rate
              << " mean_iters="
              << double(result.stats.costs.opt_iterations) / run_cfg.chain_length << "\n";
  }
  return 0;
}

int cmd_compare_pcn(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_config_echo(cfg);
  CsvWriter csv(fs::path(cfg.out_dir) / "compare_pcn.csv",
                "sigma,rto_seconds_per_ess,pcn_seconds_per_ess,pcn_beta,rto_acceptance,"
                "pcn_acceptance,rto_ess_median,pcn_ess_median,pcn_nonconverged");
  for (double sigma : cfg.sigmas) {
    ExperimentConfig rto_cfg = cfg;
    rto_cfg.sigma = sigma;
    rto_cfg.sampler = "rto-scalable";
    const RunResult rto_result = run_sampler(rto_cfg);
    const double rto_total = rto_result.reference_seconds + rto_result.basis_seconds +
                             rto_result.chain.propose_seconds +
                             rto_result.chain.metropolize_seconds;
    const double rto_per_ess = rto_total / rto_result.stats.ess_median;

    ExperimentConfig pcn_cfg = cfg;
    pcn_cfg.sigma = sigma;
    pcn_cfg.sampler = "pcn";
    pcn_cfg.pcn_tune = true;
    const RunResult pcn_result = run_sampler(pcn_cfg);
    const double pcn_total = pcn_result.chain.propose_seconds;
    const double pcn_per_ess = pcn_total / std::max(pcn_result.stats.ess_median, 1e-12);

    csv.row(sigma, rto_per_ess, pcn_per_ess, pcn_result.tuned_pcn_beta,
            rto_result.stats.acceptance_rate, pcn_result.stats.acceptance_rate,
            rto_result.stats.ess_median, pcn_result.stats.ess_median,
            int(pcn_result.pcn_nonconverged));
    std::cout << "sigma=" << sigma << " rto_s_per_ess=" << rto_per_ess
              << " pcn_s_per_ess=" << pcn_per_ess
              << (pcn_result.pcn_nonconverged ? " (pcn non-converged)" : "") << "\n";
  }
  return 0;
}

int cmd_truncation_study(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  write_config_echo(cfg);
  const BuiltProblem built = build_problem(cfg);
  const WhitenedProblem& wp = built.wp;

  SolveOptions ref_opts = default_reference_options();
  ref_opts.ftol = cfg.ftol;
  const VectorXd v_ref = find_reference(wp, ref_opts);
  const SvdBasis full = build_svd_basis(wp, v_ref, 0.0);

  CsvWriter csv(fs::path(cfg.out_dir) / "truncation.csv",
                "tau,rank,acceptance,ess_median,ess_per_step,mean_opt_iters");

  const bool emit_grids = (cfg.model == "toy2d");
  if (emit_grids) {
    // Prior and target densities on the diagnostic grid.
    const Index pts = cfg.grid_points;
    const double lo = -6.0, hi = 6.0, step = (hi - lo) / double(pts - 1);
    CsvWriter prior_csv(fs::path(cfg.out_dir) / "prior_density.csv", "x,y,density");
    CsvWriter target_csv(fs::path(cfg.out_dir) / "target_density.csv", "x,y,density");
    // Normalize the target numerically on the same grid.
    double target_mass = 0.0;
    VectorXd v(2);
    for (Index i = 0; i < pts; ++i)
      for (Index j = 0; j < pts; ++j) {
        v << lo + i * step, lo + j * step;
        const double w = ((i == 0 || i + 1 == pts) ? 0.5 : 1.0) *
                         ((j == 0 || j + 1 == pts) ? 0.5 : 1.0) * step * step;
        target_mass += w * std::exp(wp.log_target(v));
      }
    for (Index i = 0; i < pts; ++i)
      for (Index j = 0; j < pts; ++j) {
        v << lo + i * step, lo + j * step;
        prior_csv.row(v[0], v[1], std::exp(-0.5 * v.squaredNorm()) / (2.0 * M_PI));
        target_csv.row(v[0], v[1], std::exp(wp.log_target(v)) / target_mass);
      }
  }

  for (double tau : cfg.thresholds) {
    const SvdBasis basis = tau <= full.threshold ? full : full.truncated(tau);
    SolveOptions popts = proposal_options(cfg);
    const auto proposals =
        sample_proposals(wp, basis, static_cast<int>(cfg.chain_length), cfg.seed,
                         cfg.workers, popts);
    const Chain chain =
        metropolize(proposals, v_ref, weight_scalable(wp, basis, v_ref), cfg.seed);
    const ChainStats st = chain_stats(chain);
    csv.row(tau, basis.rank(), st.acceptance_rate, st.ess_median,
            st.ess_median / double(st.length),
            double(st.costs.opt_iterations) / double(st.length));
    std::cout << "tau=" << tau << " rank=" << basis.rank()
              << " acceptance=" << st.acceptance_rate << " ess=" << st.ess_median << "\n";

    if (emit_grids) {
      const Index pts = cfg.grid_points;
      const double lo = -6.0, hi = 6.0, step = (hi - lo) / double(pts - 1);
      CsvWriter grid_csv(fs::path(cfg.out_dir) /
                             ("proposal_density_rank" + std::to_string(basis.rank()) + ".csv"),
                         "x,y,density");
      VectorXd v(2);
      for (Index i = 0; i < pts; ++i)
        for (Index j = 0; j < pts; ++j) {
          v << lo + i * step, lo + j * step;
          grid_csv.row(v[0], v[1], std::exp(log_proposal_density(wp, basis, v)));
        }
    }
  }
  return 0;
}

}  // namespace rtotool
