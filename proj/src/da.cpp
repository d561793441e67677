#include "fairdiv/da.hpp"

#include <algorithm>
#include <cmath>

namespace fairdiv {

double da_multiplier(double mean_utility, double budget, const DAParams& params) {
  const double lower = params.multiplier_lower(budget);
  const double upper = params.multiplier_upper();
  if (mean_utility <= 0.0) return upper;
  return std::clamp(budget / mean_utility, lower, upper);
}

std::size_t da_iter(DAState& state, std::span<const double> plugged_values, std::span<const double> budgets,
                    const DAParams& params) {
  const std::size_t n = state.mean_utilities.size();
  if (n == 0) throw InvalidInput("da_iter: no agents");
  if (plugged_values.size() != n || budgets.size() != n) throw InvalidInput("da_iter: length mismatch");

  std::size_t winner = 0;
  double best_bid = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double bid = da_multiplier(state.mean_utilities[i], budgets[i], params) * plugged_values[i];
    if (bid > best_bid) {
      best_bid = bid;
      winner = i;
    }
  }

  const double t = static_cast<double>(state.da_round);
  const double keep = (t - 1.0) / t;
  for (std::size_t i = 0; i < n; ++i) {
    const double utility = i == winner ? plugged_values[winner] : 0.0;
    state.mean_utilities[i] = keep * state.mean_utilities[i] + utility / t;
  }
  state.payments_total += best_bid;
  ++state.da_round;
  return winner;
}

}  // namespace fairdiv
