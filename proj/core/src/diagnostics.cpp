#include "rto/diagnostics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace rto {

namespace {

// Autocovariance c_0..c_{max_lag} via FFT, biased (1/N) normalization.
std::vector<double> autocovariance(const VectorXd& series, Index max_lag) {
  const Index n = series.size();
  const double mean = series.mean();
  Index size = 1;
  while (size < 2 * n) size *= 2;

  std::vector<double> padded(static_cast<size_t>(size), 0.0);
  for (Index i = 0; i < n; ++i) padded[static_cast<size_t>(i)] = series[i] - mean;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& z : freq) z = z * std::conj(z);
  std::vector<double> corr;
  fft.inv(corr, freq);

  std::vector<double> cov(static_cast<size_t>(max_lag) + 1);
  for (Index k = 0; k <= max_lag; ++k)
    cov[static_cast<size_t>(k)] = corr[static_cast<size_t>(k)] / static_cast<double>(n);
  return cov;
}

}  // namespace

bool is_degenerate_series(const VectorXd& series) {
  if (series.size() == 0) return true;
  return (series.array() == series[0]).all();
}

double ess(const VectorXd& series) {
  const Index n = series.size();
  if (n < 10) throw std::invalid_argument("ess: need at least 10 samples");
  if (is_degenerate_series(series)) return static_cast<double>(n);

  const Index max_lag = n - 1;
  const std::vector<double> cov = autocovariance(series, max_lag);
  const double var = cov[0];
  if (var <= 0.0) return static_cast<double>(n);

  // Sum of paired autocorrelations while the pairs stay positive, with the
  // monotone (running-minimum) envelope.
  double tau = 1.0;  // 1 + 2 sum rho_k accumulated pairwise
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Index k = 1; k + 1 <= max_lag; k += 2) {
    double pair = (cov[static_cast<size_t>(k)] + cov[static_cast<size_t>(k + 1)]) / var;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }

  const double out = static_cast<double>(n) / tau;
  return std::clamp(out, 1.0, static_cast<double>(n));
}

ChainStats chain_stats(const Chain& chain) {
  if (chain.states.empty()) throw std::invalid_argument("chain_stats: empty chain");
  ChainStats stats;
  const Index steps = chain.length();
  const Index dim = chain.states.front().size();
  stats.length = steps;

  long accepted = 0;
  for (uint8_t a : chain.accepted) accepted += a;
  stats.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(steps);

  stats.mean = VectorXd::Zero(dim);
  for (const VectorXd& s : chain.states) stats.mean += s;
  stats.mean /= static_cast<double>(steps);

  stats.variance = VectorXd::Zero(dim);
  for (const VectorXd& s : chain.states) stats.variance += (s - stats.mean).cwiseAbs2();
  stats.variance /= static_cast<double>(std::max<Index>(steps - 1, 1));

  stats.ess_per_coord.resize(dim);
  VectorXd series(steps);
  for (Index c = 0; c < dim; ++c) {
    for (Index k = 0; k < steps; ++k) series[k] = chain.states[static_cast<size_t>(k)][c];
    if (is_degenerate_series(series)) stats.degenerate = true;
    stats.ess_per_coord[c] = ess(series);
  }
  stats.ess_median = quantile(stats.ess_per_coord, 0.5);

  stats.q05.resize(dim);
  stats.q95.resize(dim);
  for (Index c = 0; c < dim; ++c) {
    for (Index k = 0; k < steps; ++k) series[k] = chain.states[static_cast<size_t>(k)][c];
    stats.q05[c] = quantile(series, 0.05);
    stats.q95[c] = quantile(series, 0.95);
  }

  stats.costs = chain.costs;
  stats.propose_seconds = chain.propose_seconds;
  stats.metropolize_seconds = chain.metropolize_seconds;
  return stats;
}

double quantile(VectorXd series, double q) {
  if (series.size() == 0) throw std::invalid_argument("quantile: empty series");
  q = std::clamp(q, 0.0, 1.0);
  std::sort(series.data(), series.data() + series.size());
  const double pos = q * static_cast<double>(series.size() - 1);
  const Index lo = static_cast<Index>(std::floor(pos));
  const Index hi = static_cast<Index>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return (1.0 - frac) * series[lo] + frac * series[hi];
}

std::pair<VectorXd, VectorXd> credible_band(
    const Chain& chain, double level,
    const std::function<VectorXd(const VectorXd&)>& transform) {
  if (chain.states.empty()) throw std::invalid_argument("credible_band: empty chain");
  if (!(level > 0.0 && level <= 1.0))
    throw std::invalid_argument("credible_band: level must be in (0, 1]");

  std::vector<VectorXd> mapped;
  mapped.reserve(chain.states.size());
  for (const VectorXd& s : chain.states) mapped.push_back(transform ? transform(s) : s);

  const Index dim = mapped.front().size();
  const Index steps = static_cast<Index>(mapped.size());
  const double tail = 0.5 * (1.0 - level);
  VectorXd lo(dim), hi(dim), series(steps);
  for (Index c = 0; c < dim; ++c) {
    for (Index k = 0; k < steps; ++k) series[k] = mapped[static_cast<size_t>(k)][c];
    lo[c] = quantile(series, tail);
    hi[c] = quantile(series, 1.0 - tail);
  }
  return {lo, hi};
}

}  // namespace rto
