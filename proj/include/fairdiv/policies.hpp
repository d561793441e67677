#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairdiv/core.hpp"
#include "fairdiv/da.hpp"
#include "fairdiv/sim_state.hpp"

namespace fairdiv {

enum class PolicyId { kRandom, kUcb, kDaGreedy, kDaEtc, kDaUcb, kRdaUcb, kDaOracle };

std::string_view policy_name(PolicyId id);
std::optional<PolicyId> parse_policy(std::string_view name);
/// The six user-facing identifiers, in canonical order.
const std::array<PolicyId, 6>& benchmark_policies();
/// Position in the canonical order; da-oracle comes last.
std::size_t policy_index(PolicyId id);

/// Everything a policy may know up front. True values are not part of it.
struct PolicyContext {
  std::size_t num_agents = 0;
  std::size_t num_types = 0;
  std::uint64_t horizon = 0;
  std::vector<double> budgets;
  DAParams da_params;
  std::optional<std::uint64_t> t0_override;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyId id() const = 0;
  /// Picks the winner of an arriving item of `type`.
  virtual std::size_t choose(std::size_t type, const SimState& state, Rng& rng) = 0;
  /// Called once per round after `state` has absorbed the feedback.
  virtual void observe(std::size_t /*agent*/, std::size_t /*type*/, double /*utility*/, const SimState& /*state*/) {}
  /// Adds policy-specific diagnostics to a finished trace.
  virtual void annotate(RunTrace& /*trace*/) const {}
};

/// min(1, mean + sqrt(log t / (2 N))); 1 for an unvisited pair.
double ucb_value(const SimState& state, std::size_t agent, std::size_t type, std::uint64_t t);

/// Proj_[l, h](mean + sqrt(log(T^2) / (2 N))); h for an unvisited pair.
double clipped_ucb_value(double mean, std::uint64_t count, std::uint64_t horizon, const DAParams& params);

/// ceil(T^{2/3} (nm)^{1/3}) clamped to [nm, T], or the override.
std::uint64_t explore_length(std::uint64_t horizon, std::size_t num_agents, std::size_t num_types,
                             std::optional<std::uint64_t> t0_override = std::nullopt);

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::size_t num_agents) : n_(num_agents) {}
  PolicyId id() const override { return PolicyId::kRandom; }
  std::size_t choose(std::size_t type, const SimState& state, Rng& rng) override;

 private:
  std::size_t n_;
};

/// Social-welfare greedy: the highest UCB value for the arriving type wins.
class UcbPolicy final : public Policy {
 public:
  PolicyId id() const override { return PolicyId::kUcb; }
  std::size_t choose(std::size_t type, const SimState& state, Rng& rng) override;
};

/// DA driven by the current empirical means, which keep updating.
class DaGreedyPolicy final : public Policy {
 public:
  explicit DaGreedyPolicy(const PolicyContext& ctx);
  PolicyId id() const override { return PolicyId::kDaGreedy; }
  std::size_t choose(std::size_t type, const SimState& state, Rng& rng) override;
  const DAState& da_state() const { return da_; }

 private:
  std::vector<double> budgets_;
  DAParams params_;
  DAState da_;
  std::vector<double> plugged_;
};

/// Uniform exploration for T0 rounds, then DA on the estimator frozen at T0.
class DaEtcPolicy final : public Policy {
 public:
  enum class Phase { kExplore, kCommit };

  explicit DaEtcPolicy(const PolicyContext& ctx);
  PolicyId id() const override { return PolicyId::kDaEtc; }
  std::size_t choose(std::size_t type, const SimState& state, Rng& rng) override;
  void observe(std::size_t agent, std::size_t type, double utility, const SimState& state) override;
  void annotate(RunTrace& trace) const override;

  Phase phase() const { return phase_; }
  std::uint64_t t0() const { return t0_; }
  /// Empty until the explore phase ends.
  const Matrix& frozen_estimator() const { return frozen_; }
  const DAState& da_state() const { return da_; }

 private:
  std::size_t n_;
  std::uint64_t t0_;
  std::vector<double> budgets_;
  DAParams params_;
  Phase phase_ = Phase::kExplore;
  Matrix frozen_;
  DAState da_;
  std::vector<double> plugged_;
};

/// DA fed with the (capped) UCB values of the arriving type every round.
class DaUcbPolicy final : public Policy {
 public:
  explicit DaUcbPolicy(const PolicyContext& ctx);
  PolicyId id() const override { return PolicyId::kDaUcb; }
  std::size_t choose(std::size_t type, const SimState& state, Rng& rng) override;
  const DAState& da_state() const { return da_; }
  /// Values passed to the auction in the last round.
  std::span<const double> last_plugged() const { return plugged_; }

 private:
  std::vector<double> budgets_;
  DAParams params_;
  DAState da_;
  std::vector<double> plugged_;
};

/// Repeated DA on a frozen clipped-UCB matrix; a fresh DA instance starts
/// whenever the winner's pair count reaches a power of two.
class RdaUcbPolicy final : public Policy {
 public:
  explicit RdaUcbPolicy(const PolicyContext& ctx);
  PolicyId id() const override { return PolicyId::kRdaUcb; }
  std::size_t choose(std::size_t type, const SimState& state, Rng& rng) override;
  void observe(std::size_t agent, std::size_t type, double utility, const SimState& state) override;
  void annotate(RunTrace& trace) const override;

  std::uint64_t restart_count() const { return restarts_; }
  std::uint64_t instance_start() const { return instance_start_; }
  const Matrix& frozen_values() const { return frozen_; }
  const DAState& da_state() const { return da_; }
  std::span<const double> last_plugged() const { return plugged_; }

 private:
  std::size_t n_;
  std::uint64_t horizon_;
  std::uint64_t max_trigger_;  // 2^floor(log2 T)
  std::vector<double> budgets_;
  DAParams params_;
  Matrix frozen_;
  DAState da_;
  std::uint64_t restarts_ = 0;
  std::uint64_t instance_start_ = 1;
  std::vector<double> plugged_;
};

/// DA with the true values revealed for every agent (full information).
/// Test-only reference; it is not a bandit policy.
class DaOraclePolicy final : public Policy {
 public:
  DaOraclePolicy(const PolicyContext& ctx, Matrix true_values);
  PolicyId id() const override { return PolicyId::kDaOracle; }
  std::size_t choose(std::size_t type, const SimState& state, Rng& rng) override;
  const DAState& da_state() const { return da_; }

 private:
  Matrix values_;
  std::vector<double> budgets_;
  DAParams params_;
  DAState da_;
  std::vector<double> plugged_;
};

/// Builds a policy. `true_values` is consulted only for da-oracle, which
/// requires it.
std::unique_ptr<Policy> make_policy(PolicyId id, const PolicyContext& ctx, const Matrix* true_values = nullptr);

}  // namespace fairdiv
