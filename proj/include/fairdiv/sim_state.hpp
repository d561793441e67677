#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fairdiv/core.hpp"

namespace fairdiv {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Observable history of an episode: what every policy is allowed to read.
class SimState {
 public:
  SimState() = default;
  SimState(std::size_t num_agents, std::size_t num_types)
      : n_(num_agents),
        m_(num_types),
        counts_(num_agents * num_types, 0),
        reward_sums_(num_agents * num_types, 0.0),
        cumulative_(num_agents, 0.0) {}

  std::size_t num_agents() const { return n_; }
  std::size_t num_types() const { return m_; }

  /// Index of the round about to be played (1-based).
  std::uint64_t round() const { return completed_ + 1; }
  std::uint64_t completed_rounds() const { return completed_; }

  /// N_{i,j}: items of type j given to agent i in the completed rounds.
  std::uint64_t count(std::size_t i, std::size_t j) const { return counts_[i * m_ + j]; }
  double reward_sum(std::size_t i, std::size_t j) const { return reward_sums_[i * m_ + j]; }

  /// Empirical mean of the pair, or `unvisited` when the pair was never drawn.
  double estimate(std::size_t i, std::size_t j, double unvisited = 1.0) const {
    const auto k = counts_[i * m_ + j];
    return k == 0 ? unvisited : reward_sums_[i * m_ + j] / static_cast<double>(k);
  }

  std::span<const double> cumulative_utilities() const { return cumulative_; }

  /// Applies one round's feedback and advances the round index.
  void record(std::size_t agent, std::size_t type, double utility) {
    ++counts_[agent * m_ + type];
    reward_sums_[agent * m_ + type] += utility;
    cumulative_[agent] += utility;
    ++completed_;
  }

  Matrix count_matrix() const {
    Matrix out(n_, m_);
    for (std::size_t k = 0; k < counts_.size(); ++k) out.data()[k] = static_cast<double>(counts_[k]);
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::uint64_t completed_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<double> reward_sums_;
  std::vector<double> cumulative_;
};

}  // namespace fairdiv
