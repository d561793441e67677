#include "fairdiv/policies.hpp"

#include <algorithm>
#include <cmath>

namespace fairdiv {

namespace {

constexpr std::array<std::string_view, 7> kNames{"random", "ucb", "da-grdy", "da-etc", "da-ucb", "rda-ucb", "da-oracle"};

bool is_power_of_two(std::uint64_t x) { return x != 0 && (x & (x - 1)) == 0; }

std::uint64_t floor_pow2(std::uint64_t x) {
  std::uint64_t p = 1;
  while (p <= x / 2) p *= 2;
  return p;
}

}  // namespace

std::string_view policy_name(PolicyId id) { return kNames[static_cast<std::size_t>(id)]; }

std::optional<PolicyId> parse_policy(std::string_view name) {
  for (std::size_t k = 0; k < kNames.size(); ++k) {
    if (kNames[k] == name) return static_cast<PolicyId>(k);
  }
  return std::nullopt;
}

const std::array<PolicyId, 6>& benchmark_policies() {
  static constexpr std::array<PolicyId, 6> kAll{PolicyId::kRandom, PolicyId::kUcb,   PolicyId::kDaGreedy,
                                                PolicyId::kDaEtc,  PolicyId::kDaUcb, PolicyId::kRdaUcb};
  return kAll;
}

std::size_t policy_index(PolicyId id) { return static_cast<std::size_t>(id); }

double ucb_value(const SimState& state, std::size_t agent, std::size_t type, std::uint64_t t) {
  const auto count = state.count(agent, type);
  if (count == 0) return 1.0;
  const double bonus = std::sqrt(std::log(static_cast<double>(t)) / (2.0 * static_cast<double>(count)));
  return std::min(1.0, state.estimate(agent, type) + bonus);
}

double clipped_ucb_value(double mean, std::uint64_t count, std::uint64_t horizon, const DAParams& params) {
  if (count == 0) return params.h;
  const double log_t2 = 2.0 * std::log(static_cast<double>(horizon));
  return std::clamp(mean + std::sqrt(log_t2 / (2.0 * static_cast<double>(count))), params.l, params.h);
}

std::uint64_t explore_length(std::uint64_t horizon, std::size_t num_agents, std::size_t num_types,
                             std::optional<std::uint64_t> t0_override) {
  if (t0_override) return std::min(*t0_override, horizon);
  // Smallest k with k^3 >= T^2 nm, in exact integer arithmetic.
  using u128 = unsigned __int128;
  const u128 target = static_cast<u128>(horizon) * horizon * num_agents * num_types;
  auto k = static_cast<std::uint64_t>(std::cbrt(static_cast<double>(target)));
  while (k > 0 && static_cast<u128>(k - 1) * (k - 1) * (k - 1) >= target) --k;
  while (static_cast<u128>(k) * k * k < target) ++k;
  const std::uint64_t pairs = num_agents * num_types;
  return std::min(std::max(k, pairs), horizon);
}

std::size_t RandomPolicy::choose(std::size_t /*type*/, const SimState& /*state*/, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n_ - 1)(rng);
}

std::size_t UcbPolicy::choose(std::size_t type, const SimState& state, Rng& /*rng*/) {
  std::size_t best = 0;
  double best_value = -1.0;
  for (std::size_t i = 0; i < state.num_agents(); ++i) {
    const double v = ucb_value(state, i, type, state.round());
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

DaGreedyPolicy::DaGreedyPolicy(const PolicyContext& ctx)
    : budgets_(ctx.budgets), params_(ctx.da_params), da_(ctx.num_agents), plugged_(ctx.num_agents) {}

std::size_t DaGreedyPolicy::choose(std::size_t type, const SimState& state, Rng& /*rng*/) {
  for (std::size_t i = 0; i < plugged_.size(); ++i) plugged_[i] = state.estimate(i, type);
  return da_iter(da_, plugged_, budgets_, params_);
}

DaEtcPolicy::DaEtcPolicy(const PolicyContext& ctx)
    : n_(ctx.num_agents),
      t0_(explore_length(ctx.horizon, ctx.num_agents, ctx.num_types, ctx.t0_override)),
      budgets_(ctx.budgets),
      params_(ctx.da_params),
      da_(ctx.num_agents),
      plugged_(ctx.num_agents) {}

std::size_t DaEtcPolicy::choose(std::size_t type, const SimState& /*state*/, Rng& rng) {
  if (phase_ == Phase::kExplore) {
    return std::uniform_int_distribution<std::size_t>(0, n_ - 1)(rng);
  }
  for (std::size_t i = 0; i < n_; ++i) plugged_[i] = frozen_(i, type);
  return da_iter(da_, plugged_, budgets_, params_);
}

void DaEtcPolicy::observe(std::size_t /*agent*/, std::size_t /*type*/, double /*utility*/, const SimState& state) {
  if (phase_ != Phase::kExplore || state.completed_rounds() < t0_) return;
  frozen_ = Matrix(state.num_agents(), state.num_types());
  for (std::size_t i = 0; i < state.num_agents(); ++i) {
    for (std::size_t j = 0; j < state.num_types(); ++j) frozen_(i, j) = state.estimate(i, j);
  }
  phase_ = Phase::kCommit;
}

void DaEtcPolicy::annotate(RunTrace& trace) const { trace.t0 = t0_; }

DaUcbPolicy::DaUcbPolicy(const PolicyContext& ctx)
    : budgets_(ctx.budgets), params_(ctx.da_params), da_(ctx.num_agents), plugged_(ctx.num_agents) {}

std::size_t DaUcbPolicy::choose(std::size_t type, const SimState& state, Rng& /*rng*/) {
  const auto t = state.round();
  for (std::size_t i = 0; i < plugged_.size(); ++i) plugged_[i] = ucb_value(state, i, type, t);
  return da_iter(da_, plugged_, budgets_, params_);
}

RdaUcbPolicy::RdaUcbPolicy(const PolicyContext& ctx)
    : n_(ctx.num_agents),
      horizon_(ctx.horizon),
      max_trigger_(floor_pow2(std::max<std::uint64_t>(ctx.horizon, 1))),
      budgets_(ctx.budgets),
      params_(ctx.da_params),
      frozen_(ctx.num_agents, ctx.num_types, ctx.da_params.h),
      da_(ctx.num_agents),
      plugged_(ctx.num_agents) {}

std::size_t RdaUcbPolicy::choose(std::size_t type, const SimState& /*state*/, Rng& /*rng*/) {
  for (std::size_t i = 0; i < n_; ++i) plugged_[i] = frozen_(i, type);
  return da_iter(da_, plugged_, budgets_, params_);
}

void RdaUcbPolicy::observe(std::size_t agent, std::size_t type, double /*utility*/, const SimState& state) {
  const auto count = state.count(agent, type);
  if (count < 2 || count > max_trigger_ || !is_power_of_two(count)) return;
  for (std::size_t i = 0; i < state.num_agents(); ++i) {
    for (std::size_t j = 0; j < state.num_types(); ++j) {
      frozen_(i, j) = clipped_ucb_value(state.estimate(i, j), state.count(i, j), horizon_, params_);
    }
  }
  da_.reset();
  ++restarts_;
  instance_start_ = state.completed_rounds() + 1;
}

void RdaUcbPolicy::annotate(RunTrace& trace) const { trace.restart_count = restarts_; }

DaOraclePolicy::DaOraclePolicy(const PolicyContext& ctx, Matrix true_values)
    : values_(std::move(true_values)),
      budgets_(ctx.budgets),
      params_(ctx.da_params),
      da_(ctx.num_agents),
      plugged_(ctx.num_agents) {}

std::size_t DaOraclePolicy::choose(std::size_t type, const SimState& /*state*/, Rng& /*rng*/) {
  for (std::size_t i = 0; i < plugged_.size(); ++i) plugged_[i] = values_(i, type);
  return da_iter(da_, plugged_, budgets_, params_);
}

std::unique_ptr<Policy> make_policy(PolicyId id, const PolicyContext& ctx, const Matrix* true_values) {
  if (ctx.num_agents == 0) throw InvalidInput("policy needs at least one agent");
  if (ctx.budgets.size() != ctx.num_agents) throw InvalidInput("policy context: budget length mismatch");
  switch (id) {
    case PolicyId::kRandom: return std::make_unique<RandomPolicy>(ctx.num_agents);
    case PolicyId::kUcb: return std::make_unique<UcbPolicy>();
    case PolicyId::kDaGreedy: return std::make_unique<DaGreedyPolicy>(ctx);
    case PolicyId::kDaEtc: return std::make_unique<DaEtcPolicy>(ctx);
    case PolicyId::kDaUcb: return std::make_unique<DaUcbPolicy>(ctx);
    case PolicyId::kRdaUcb: return std::make_unique<RdaUcbPolicy>(ctx);
    case PolicyId::kDaOracle:
      if (true_values == nullptr) throw InvalidInput("da-oracle requires the true value matrix");
      return std::make_unique<DaOraclePolicy>(ctx, *true_values);
  }
  throw InvalidInput("unknown policy");
}

}  // namespace fairdiv
