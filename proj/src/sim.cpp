#include "fairdiv/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fairdiv {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

std::size_t sample_item(std::span<const double> supply, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t j = 0; j < supply.size(); ++j) {
    if (supply[j] <= 0.0) continue;
    cumulative += supply[j];
    last_positive = j;
    if (u < cumulative) return j;
  }
  // Rounding left the cumulative sum a hair under one.
  return last_positive;
}

double realize_utility(double value, const NoiseSpec& noise, Rng& rng) {
  switch (noise.kind) {
    case NoiseKind::kNone: return value;
    case NoiseKind::kBernoulli:
      if (!(value >= 0.0 && value <= 1.0)) throw InvalidInput("bernoulli feedback needs a value in [0, 1]");
      return uniform01(rng) < value ? 1.0 : 0.0;
    case NoiseKind::kGaussian:
      return value + noise.sigma * std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  return value;
}

PolicyContext make_policy_context(const MarketInstance& instance, const RunConfig& config) {
  PolicyContext ctx;
  ctx.num_agents = instance.num_agents();
  ctx.num_types = instance.num_types();
  ctx.horizon = config.horizon;
  ctx.budgets = instance.budgets;
  ctx.da_params = instance.da_params;
  ctx.t0_override = config.t0_override;
  return ctx;
}

RunTrace run_episode(const MarketInstance& instance, Policy& policy, const RunConfig& config, const EGSolution& eg,
                     const RoundHook& hook) {
  validate(config);
  const std::size_t n = instance.num_agents();
  if (eg.utilities.size() != n) throw InvalidInput("equilibrium does not match the instance");

  Rng rng(config.seed);
  SimState state(n, instance.num_types());
  RunTrace trace;
  const auto stride = config.effective_stride();
  trace.checkpoints.reserve(config.horizon / stride + 1);

  for (std::uint64_t t = 1; t <= config.horizon; ++t) {
    const std::size_t type = sample_item(instance.supply, rng);
    const std::size_t winner = policy.choose(type, state, rng);
    if (winner >= n) {
      std::ostringstream msg;
      msg << policy_name(policy.id()) << " chose agent " << winner << " of " << n << " at round " << t;
      throw PolicyError(msg.str());
    }
    const double utility = realize_utility(instance.values(winner, type), instance.noise, rng);
    state.record(winner, type, utility);
    policy.observe(winner, type, utility, state);
    if (hook) hook(t, policy, state);

    if (t % stride == 0 || t == config.horizon) {
      const auto cumulative = state.cumulative_utilities();
      double welfare = 0.0;
      if (std::all_of(cumulative.begin(), cumulative.end(), [](double u) { return u >= 0.0; })) {
        welfare = nsw(cumulative, instance.budgets);
      } else {
        ++trace.nsw_clamped_checkpoints;
      }
      trace.checkpoints.push_back({t, static_cast<double>(t) * eg.onsw - welfare, welfare});
    }
  }

  const auto cumulative = state.cumulative_utilities();
  trace.final_cumulative_utilities.assign(cumulative.begin(), cumulative.end());
  trace.final_regret = trace.checkpoints.back().regret;
  std::vector<double> mean(n);
  for (std::size_t i = 0; i < n; ++i) mean[i] = cumulative[i] / static_cast<double>(config.horizon);
  trace.final_l2_loss = l2_utility_loss(mean, eg.utilities);
  trace.final_rms_loss = rms_utility_loss(mean, eg.utilities);
  trace.per_pair_counts = state.count_matrix();
  policy.annotate(trace);
  return trace;
}

RunTrace run_episode(const MarketInstance& instance, PolicyId policy, const RunConfig& config, const EGSolution& eg,
                     const RoundHook& hook) {
  auto p = make_policy(policy, make_policy_context(instance, config), &instance.values);
  return run_episode(instance, *p, config, eg, hook);
}

std::pair<double, double> mean_and_stderr(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double k = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= k;
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (k - 1.0)) / std::sqrt(k)};
}

BatchResult run_batch(const BatchSpec& spec) {
  validate(spec.config);
  if (!spec.make_instance) throw InvalidInput("batch needs an instance factory");
  const std::size_t reps = spec.config.replications;
  const std::size_t num_policies = spec.policies.size();
  const std::uint64_t base = spec.config.seed;

  struct Replication {
    MarketInstance instance;
    EGSolution eg;
  };
  std::vector<Replication> setups(reps);
  std::vector<RunTrace> traces(reps * num_policies);

  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::uint64_t failing_seed = 0;
  std::size_t failing_task = static_cast<std::size_t>(-1);
  auto record_failure = [&](std::size_t task, std::uint64_t seed) {
    std::lock_guard lock(error_mutex);
    if (task < failing_task) {
      failing_task = task;
      failing_seed = seed;
      first_error = std::current_exception();
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::max(1u, std::min<unsigned>(spec.threads == 0 ? hw : spec.threads,
                                                           static_cast<unsigned>(reps * std::max<std::size_t>(num_policies, 1))));
  auto parallel_for = [workers](std::size_t count, const std::function<void(std::size_t)>& body) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) body(k);
      });
    }
    for (auto& th : pool) th.join();
  };

  parallel_for(reps, [&](std::size_t r) {
    const auto seed = mix_seed(base, kInstanceStream, r);
    try {
      setups[r].instance = spec.make_instance(seed);
      setups[r].eg = solve_eg(setups[r].instance, spec.solve);
    } catch (...) {
      record_failure(r, seed);
    }
  });
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      throw BatchError(std::string("instance setup failed: ") + e.what(), failing_seed, BatchError::Stage::kSetup,
                       first_error);
    }
  }

  parallel_for(reps * num_policies, [&](std::size_t task) {
    const std::size_t p = task / reps;
    const std::size_t r = task % reps;
    RunConfig cfg = spec.config;
    cfg.seed = mix_seed(base, policy_index(spec.policies[p]), r);
    cfg.policy = std::string(policy_name(spec.policies[p]));
    try {
      traces[task] = run_episode(setups[r].instance, spec.policies[p], cfg, setups[r].eg);
    } catch (...) {
      record_failure(reps + task, cfg.seed);
    }
  });
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      throw BatchError(std::string("episode failed: ") + e.what(), failing_seed, BatchError::Stage::kEpisode,
                       first_error);
    }
  }

  BatchResult result;
  std::vector<double> onsw(reps);
  for (std::size_t r = 0; r < reps; ++r) onsw[r] = setups[r].eg.onsw;
  const double mean_onsw = mean_and_stderr(onsw).first;
  for (std::size_t p = 0; p < num_policies; ++p) {
    PolicySummary s;
    s.policy = spec.policies[p];
    s.replications = reps;
    s.horizon = spec.config.horizon;
    s.mean_onsw = mean_onsw;
    std::vector<double> regrets(reps), losses(reps), rms(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      regrets[r] = traces[p * reps + r].final_regret;
      losses[r] = traces[p * reps + r].final_l2_loss;
      rms[r] = traces[p * reps + r].final_rms_loss;
    }
    std::tie(s.mean_final_regret, s.stderr_final_regret) = mean_and_stderr(regrets);
    std::tie(s.mean_l2_loss, s.stderr_l2_loss) = mean_and_stderr(losses);
    std::tie(s.mean_rms_loss, s.stderr_rms_loss) = mean_and_stderr(rms);
    const auto& first = traces[p * reps].checkpoints;
    std::vector<double> column(reps);
    for (std::size_t c = 0; c < first.size(); ++c) {
      for (std::size_t r = 0; r < reps; ++r) column[r] = traces[p * reps + r].checkpoints[c].regret;
      const auto [mean, se] = mean_and_stderr(column);
      s.checkpoint_t.push_back(first[c].t);
      s.mean_regret.push_back(mean);
      s.stderr_regret.push_back(se);
    }
    if (spec.keep_traces) {
      s.traces.assign(std::make_move_iterator(traces.begin() + static_cast<std::ptrdiff_t>(p * reps)),
                      std::make_move_iterator(traces.begin() + static_cast<std::ptrdiff_t>((p + 1) * reps)));
    }
    result.summaries.push_back(std::move(s));
  }
  return result;
}

namespace {

void put_number(std::ostream& out, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out << buf;
}

}  // namespace

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "t,regret,nsw\n";
  for (const auto& c : trace.checkpoints) {
    out << c.t << ',';
    put_number(out, c.regret);
    out << ',';
    put_number(out, c.nsw);
    out << '\n';
  }
}

void write_aggregate_csv(std::ostream& out, const PolicySummary& summary) {
  out << "t,mean_regret,stderr\n";
  for (std::size_t c = 0; c < summary.checkpoint_t.size(); ++c) {
    out << summary.checkpoint_t[c] << ',';
    put_number(out, summary.mean_regret[c]);
    out << ',';
    put_number(out, summary.stderr_regret[c]);
    out << '\n';
  }
}

}  // namespace fairdiv
