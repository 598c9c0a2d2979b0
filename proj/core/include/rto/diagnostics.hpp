#ifndef RTOKIT_DIAGNOSTICS_HPP
#define RTOKIT_DIAGNOSTICS_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "rto/samplers.hpp"

namespace rto {

/// Effective sample size of a scalar series via the integrated
/// autocorrelation time, truncated with Geyer's initial monotone positive
/// sequence. Clipped to [1, N]. A zero-variance series returns N by
/// convention; use is_degenerate_series to flag it.
double ess(const VectorXd& series);
bool is_degenerate_series(const VectorXd& series);

struct ChainStats {
  Index length = 0;
  double acceptance_rate = 0.0;
  VectorXd ess_per_coord;
  double ess_median = 0.0;
  VectorXd mean;
  VectorXd variance;
  VectorXd q05, q95;  // marginal 5% / 95% quantiles
  bool degenerate = false;  // some coordinate never moved
  CostTotals costs;
  double propose_seconds = 0.0;
  double metropolize_seconds = 0.0;
};

/// Aggregate statistics; a pure function of the chain.
ChainStats chain_stats(const Chain& chain);

/// Per-coordinate credible band at the given level (0.9 keeps the central
/// 90%; level 1 spans min/max). States are passed through `transform` first,
/// e.g. unwhitening or a pointwise field map.
std::pair<VectorXd, VectorXd> credible_band(
    const Chain& chain, double level,
    const std::function<VectorXd(const VectorXd&)>& transform = {});

/// Empirical quantile of a series (linear interpolation between order
/// statistics).
double quantile(VectorXd series, double q);

}  // namespace rto

#endif
