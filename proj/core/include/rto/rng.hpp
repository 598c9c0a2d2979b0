#ifndef RTOKIT_RNG_HPP
#define RTOKIT_RNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace rto {

// Salts separating the independent random streams of one experiment.
inline constexpr uint64_t kProposalStream = 0x9e3779b97f4a7c15ull;
inline constexpr uint64_t kAcceptStream = 0xbf58476d1ce4e5b9ull;
inline constexpr uint64_t kChainStream = 0x94d049bb133111ebull;

/// Engine for substream `index` of a seeded experiment. Proposal i draws only
/// from substream i, so results are independent of how work is split across
/// threads.
inline std::mt19937_64 substream(uint64_t seed, uint64_t index, uint64_t salt) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32),
                    static_cast<uint32_t>(salt), static_cast<uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

inline Eigen::VectorXd standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

}  // namespace rto

#endif
