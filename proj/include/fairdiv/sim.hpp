#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairdiv/core.hpp"
#include "fairdiv/eg_solver.hpp"
#include "fairdiv/policies.hpp"
#include "fairdiv/sim_state.hpp"

namespace fairdiv {

/// A policy produced an invalid decision during an episode.
class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Part of a batch failed; names the seed that reproduces it.
class BatchError : public std::runtime_error {
 public:
  enum class Stage { kSetup, kEpisode };  // instance/equilibrium vs policy run

  BatchError(const std::string& what, std::uint64_t seed, Stage stage, std::exception_ptr cause = nullptr)
      : std::runtime_error(what + " (seed " + std::to_string(seed) + ")"),
        seed_(seed),
        stage_(stage),
        cause_(std::move(cause)) {}
  std::uint64_t seed() const { return seed_; }
  Stage stage() const { return stage_; }
  /// The original exception, for callers that dispatch on its type.
  std::exception_ptr cause() const { return cause_; }

 private:
  std::uint64_t seed_;
  Stage stage_;
  std::exception_ptr cause_;
};

/// splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for (stream, index) under one base seed. Chains splitmix64 over the
/// three words so distinct (stream, index) pairs get unrelated seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

/// Stream reserved for instance generation; policy streams use policy_index.
inline constexpr std::uint64_t kInstanceStream = 0xF00DULL;

/// Draws an item type by inverting the cumulative supply at one uniform draw.
std::size_t sample_item(std::span<const double> supply, Rng& rng);

/// Realized utility of a value under the noise model; its mean is the value.
double realize_utility(double value, const NoiseSpec& noise, Rng& rng);

PolicyContext make_policy_context(const MarketInstance& instance, const RunConfig& config);

/// Called after every round with the finished round index.
using RoundHook = std::function<void(std::uint64_t t, const Policy& policy, const SimState& state)>;

/// Plays T rounds of `policy` on `instance` with a private RNG seeded from
/// config.seed. `eg` must be the equilibrium of the same instance.
RunTrace run_episode(const MarketInstance& instance, Policy& policy, const RunConfig& config, const EGSolution& eg,
                     const RoundHook& hook = {});

/// Convenience overload that builds the policy (da-oracle gets the true values).
RunTrace run_episode(const MarketInstance& instance, PolicyId policy, const RunConfig& config, const EGSolution& eg,
                     const RoundHook& hook = {});

using InstanceFactory = std::function<MarketInstance(std::uint64_t instance_seed)>;

struct BatchSpec {
  InstanceFactory make_instance;
  std::vector<PolicyId> policies;
  RunConfig config;  // config.seed is the base seed; config.policy is ignored
  SolveOptions solve;
  unsigned threads = 0;  // 0 selects hardware concurrency
  bool keep_traces = false;
};

struct PolicySummary {
  PolicyId policy = PolicyId::kRandom;
  std::size_t replications = 0;
  std::uint64_t horizon = 0;
  double mean_onsw = 0.0;
  double mean_final_regret = 0.0;
  double stderr_final_regret = 0.0;
  double mean_l2_loss = 0.0;
  double stderr_l2_loss = 0.0;
  double mean_rms_loss = 0.0;
  double stderr_rms_loss = 0.0;
  std::vector<std::uint64_t> checkpoint_t;
  std::vector<double> mean_regret;
  std::vector<double> stderr_regret;
  std::vector<RunTrace> traces;  // filled when BatchSpec::keep_traces
};

struct BatchResult {
  std::vector<PolicySummary> summaries;  // one per BatchSpec::policies entry, same order
};

/// Replication r uses instance seed mix_seed(base, kInstanceStream, r) for
/// every policy and episode seed mix_seed(base, policy_index(p), r).
/// Episodes may run on several threads; results do not depend on it.
BatchResult run_batch(const BatchSpec& spec);

/// Mean and standard error (sample sd / sqrt(k); zero when k == 1).
std::pair<double, double> mean_and_stderr(std::span<const double> xs);

void write_trace_csv(std::ostream& out, const RunTrace& trace);
void write_aggregate_csv(std::ostream& out, const PolicySummary& summary);

}  // namespace fairdiv
