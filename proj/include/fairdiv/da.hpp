#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fairdiv/core.hpp"

namespace fairdiv {

/// State of one dual-averaging instance. The round counter is local to the
/// instance: explore-then-commit and the restarting variant start it over.
struct DAState {
  std::vector<double> mean_utilities;  // running mean of DA-side utilities
  std::uint64_t da_round = 1;          // round index passed to the next iteration
  double payments_total = 0.0;         // diagnostic only

  DAState() = default;
  explicit DAState(std::size_t num_agents) : mean_utilities(num_agents, 0.0) {}

  void reset() {
    std::fill(mean_utilities.begin(), mean_utilities.end(), 0.0);
    da_round = 1;
    payments_total = 0.0;
  }
};

/// B / mean_utility projected onto [B / (h (1 + delta0)), (1 + delta0) / l].
/// A zero mean utility maps to the upper end.
double da_multiplier(double mean_utility, double budget, const DAParams& params);

/// One round of the weighted first-price auction: the highest multiplier-
/// weighted value wins (lowest index on ties), then every running mean
/// absorbs this round's utility (the winner's plugged value, zero otherwise).
/// Returns the winner.
std::size_t da_iter(DAState& state, std::span<const double> plugged_values, std::span<const double> budgets,
                    const DAParams& params);

}  // namespace fairdiv
