#ifndef RTOKIT_TOOLS_EXPERIMENT_HPP
#define RTOKIT_TOOLS_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rto/diagnostics.hpp"
#include "rto/problem.hpp"
#include "rto/samplers.hpp"

namespace rtotool {

using nlohmann::json;

inline constexpr const char* kVersionTag = "rtokit 0.1.0";

/// Everything a run needs; serialized verbatim into config-echo.json.
struct ExperimentConfig {
  // Problem selection.
  std::string model = "elliptic";  // elliptic | toy2d | linear
  long n = 161;                    // parameter dimension (elliptic grid size)
  long linear_m = 10;              // observation count for the linear model
  double sigma = 0.0;              // noise std deviation; 0 = model default
  uint64_t data_seed = 99;         // synthetic-data noise seed

  // Sampler selection.
  std::string sampler = "rto-scalable";
  // rto-standard | rto-scalable | pcn | implicit | rml | importance
  double tau = 1e-2;        // SVD truncation threshold
  double pcn_beta = 0.2;    // pCN step size
  bool pcn_tune = false;    // grid-search beta before the final run
  std::vector<double> pcn_beta_grid{0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002};
  long pcn_steps = 200000;  // pCN chain length (pilot runs use a fraction)
  double rml_rho = 0.95;
  double rml_gamma = 0.05;

  // Run controls.
  long chain_length = 2000;
  double ftol = 1e-6;
  uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "out";
  bool save_states = false;

  // Study parameters.
  std::vector<long> dims{41, 81, 161, 321};
  std::vector<double> sigmas{1e-4, 1e-2, 1.0};
  std::vector<double> thresholds{1e9, 0.5, 1e-2, 0.0};
  long standard_chain_length = 200;  // standard-RTO budget inside studies
  long grid_points = 121;            // density-grid resolution per axis

  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  /// Fill model-dependent defaults (noise level) left unset.
  void apply_model_defaults();
  void validate() const;
};

/// Outcome of one sampler run, ready for serialization.
struct RunResult {
  rto::Chain chain;
  rto::ChainStats stats;
  double reference_seconds = 0.0;
  double basis_seconds = 0.0;
  long basis_rank = -1;
  long model_evals = 0;     // forward solves, whole run
  long model_jvps = 0;      // Jacobian actions (jvp + vjp), whole run
  double tuned_pcn_beta = 0.0;
  bool pcn_nonconverged = false;
  double is_effective_samples = 0.0;  // importance sampler only
  long invalid_proposals = 0;
};

RunResult run_sampler(const ExperimentConfig& cfg);

/// Subcommand drivers; return process exit codes (0 ok, 1 config, 2 runtime).
int cmd_sample(const ExperimentConfig& cfg);
int cmd_dim_study(const ExperimentConfig& cfg);
int cmd_noise_study(const ExperimentConfig& cfg);
int cmd_compare_pcn(const ExperimentConfig& cfg);
int cmd_truncation_study(const ExperimentConfig& cfg);

}  // namespace rtotool

#endif
