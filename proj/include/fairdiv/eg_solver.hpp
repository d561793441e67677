#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairdiv/core.hpp"

namespace fairdiv {

/// Equilibrium of the linear Fisher market induced by a MarketInstance.
struct EGSolution {
  Matrix allocation;                // x_{i,j}, fraction of type j given to agent i
  std::vector<double> utilities;    // u*_i = sum_j s_j v_{i,j} x_{i,j}
  std::vector<double> multipliers;  // beta*_i = B_i / u*_i
  std::vector<double> prices;       // p*_j = max_i beta*_i v_{i,j}
  double onsw = 0.0;
  double duality_gap = 0.0;
  std::size_t iterations = 0;
};

struct SolveOptions {
  double gap_tol = 1e-9;
  std::size_t max_iters = 200'000;
};

/// Thrown when the solver exhausts its iteration budget. Carries the iterate
/// with the smallest certified gap.
class SolverNotConverged : public std::runtime_error {
 public:
  SolverNotConverged(const std::string& what, EGSolution best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const EGSolution& best() const { return best_; }

 private:
  EGSolution best_;
};

/// An agent values every supplied item type at zero.
class DegenerateAgent : public InvalidInput {
 public:
  explicit DegenerateAgent(std::size_t agent);
  std::size_t agent() const { return agent_; }

 private:
  std::size_t agent_;
};

/// Certified gap between the dual objective at beta_i = B_i / u_i,
/// p_j = max_i beta_i v_{i,j} and the primal objective sum_i B_i log u_i.
/// Reduces to sum_j s_j p_j - sum_i B_i. Nonnegative for feasible u.
double eg_duality_gap(const MarketInstance& instance, std::span<const double> utilities);

/// Maximizes prod_i (sum_j s_j v_{i,j} x_{i,j})^{B_i} subject to column sums <= 1.
///
/// Runs proportional-response bidding from uniform bids. At power-of-two
/// rounds (then every 256) it also tries to finish exactly: the pairs that are
/// nearly tight under the current multipliers are pruned to a maximum-
/// allocation spanning forest, prices and spending are solved on the forest,
/// and the forest is pivoted until spending is nonnegative and prices are
/// dual feasible. That result is accepted only if its certified gap is within
/// tolerance. Zero-supply types are excluded and receive x = 0, p = 0.
EGSolution solve_eg(const MarketInstance& instance, const SolveOptions& options = {});

/// Grid-search oracle for small instances (n * m <= 9).
///
/// Each column ranges over the full-allocation simplex lattice. The search is
/// exhaustive at a coarse resolution and then repeats exhaustive neighbourhood
/// scans while halving the lattice spacing down to grid_step. Uses none of the
/// market-equilibrium machinery of solve_eg.
EGSolution brute_force_eg(const MarketInstance& instance, double grid_step);

struct KKTViolation {
  enum class Kind { kFeasibility, kDualFeasibility, kTightness, kClearance, kBudget };
  Kind kind;
  std::size_t agent;  // npos when the condition is per type
  std::size_t type;   // npos when the condition is per agent
  double residual;

  std::string describe() const;
};

/// Lists every equilibrium condition the solution violates at tolerance tol.
std::vector<KKTViolation> verify_kkt(const MarketInstance& instance, const EGSolution& solution, double tol);

}  // namespace fairdiv
