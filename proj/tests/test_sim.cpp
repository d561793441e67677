#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "fairdiv/data.hpp"
#include "fairdiv/eg_solver.hpp"
#include "fairdiv/sim.hpp"

using namespace fairdiv;

namespace {

MarketInstance uniform_instance(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  return make_instance(gen_uniform(n, m, rng));
}

RunConfig config(std::uint64_t horizon, std::uint64_t seed) {
  RunConfig cfg;
  cfg.horizon = horizon;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("mix_seed is injective over a batch grid") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base : {0ULL, 1ULL, 2024ULL}) {
    for (std::uint64_t p = 0; p < 7; ++p)
      for (std::uint64_t r = 0; r < 1000; ++r) seen.insert(mix_seed(base, p, r));
    for (std::uint64_t r = 0; r < 1000; ++r) seen.insert(mix_seed(base, kInstanceStream, r));
  }
  CHECK(seen.size() == 3 * 8 * 1000);
  CHECK(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
}

TEST_CASE("sample_item") {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) CHECK(sample_item(std::vector{1.0, 0.0, 0.0}, rng) == 0);
  for (int k = 0; k < 1000; ++k) CHECK(sample_item(std::vector{0.0, 0.0, 1.0}, rng) == 2);

  const int draws = 1000000;
  int zeros = 0;
  for (int k = 0; k < draws; ++k) zeros += sample_item(std::vector{0.5, 0.5}, rng) == 0;
  CHECK(std::abs(static_cast<double>(zeros) / draws - 0.5) <= 0.002);
}

TEST_CASE("sample_item passes chi-square on 50 uniform types") {
  Rng rng(2);
  const auto supply = uniform_weights(50);
  std::vector<double> counts(50, 0.0);
  const int draws = 1000000;
  for (int k = 0; k < draws; ++k) counts[sample_item(supply, rng)] += 1.0;
  const double expected = draws / 50.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 85.35);  // chi-square(49) upper 0.001 quantile
}

TEST_CASE("realize_utility") {
  Rng rng(3);
  CHECK(realize_utility(0.37, {NoiseKind::kNone, 0.0}, rng) == 0.37);
  for (int k = 0; k < 1000; ++k) CHECK(realize_utility(1.0, {}, rng) == 1.0);
  CHECK_THROWS_AS(realize_utility(1.2, {}, rng), InvalidInput);

  const int draws = 1000000;
  double sum = 0.0, gsum = 0.0;
  for (int k = 0; k < draws; ++k) {
    const double u = realize_utility(0.3, {}, rng);
    CHECK((u == 0.0 || u == 1.0));
    sum += u;
    gsum += realize_utility(0.3, {NoiseKind::kGaussian, 0.5}, rng);
  }
  CHECK(std::abs(sum / draws - 0.3) <= 0.002);
  CHECK(std::abs(gsum / draws - 0.3) <= 0.003);
}

TEST_CASE("run_episode trace contract") {
  const auto inst = uniform_instance(4, 5, 7);
  const auto eg = solve_eg(inst);
  for (auto id : benchmark_policies()) {
    auto cfg = config(2345, 11);
    cfg.checkpoint_stride = 100;
    const auto trace = run_episode(inst, id, cfg, eg);
    REQUIRE(!trace.checkpoints.empty());
    CHECK(trace.checkpoints.back().t == 2345);
    for (std::size_t k = 1; k < trace.checkpoints.size(); ++k) {
      CHECK(trace.checkpoints[k].t > trace.checkpoints[k - 1].t);
    }
    for (const auto& c : trace.checkpoints) CHECK(c.nsw >= 0.0);
    CHECK(trace.checkpoints.size() == 24);
    CHECK(trace.per_pair_counts.sum() == 2345.0);
    CHECK(trace.final_regret ==
          doctest::Approx(regret_at(2345, eg.onsw, trace.final_cumulative_utilities, inst.budgets)));
    std::vector<double> mean(4);
    for (std::size_t i = 0; i < 4; ++i) mean[i] = trace.final_cumulative_utilities[i] / 2345.0;
    CHECK(trace.final_l2_loss == doctest::Approx(l2_utility_loss(mean, eg.utilities)));
    CHECK(trace.t0.has_value() == (id == PolicyId::kDaEtc));
    CHECK(trace.restart_count.has_value() == (id == PolicyId::kRdaUcb));
  }
}

TEST_CASE("run_episode is deterministic per seed") {
  const auto inst = uniform_instance(5, 5, 8);
  const auto eg = solve_eg(inst);
  for (auto id : benchmark_policies()) {
    const auto a = run_episode(inst, id, config(3000, 5), eg);
    const auto b = run_episode(inst, id, config(3000, 5), eg);
    std::ostringstream sa, sb;
    write_trace_csv(sa, a);
    write_trace_csv(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(a.per_pair_counts == b.per_pair_counts);
    CHECK(a.final_cumulative_utilities == b.final_cumulative_utilities);
    const auto c = run_episode(inst, id, config(3000, 6), eg);
    CHECK(c.final_cumulative_utilities != a.final_cumulative_utilities);
  }
}

TEST_CASE("conservation and round accounting through the hook") {
  auto inst = uniform_instance(3, 4, 9);
  inst.noise = {NoiseKind::kGaussian, 0.3};
  const auto eg = solve_eg(inst);
  double shadow = 0.0;
  std::uint64_t expected_round = 0;
  std::vector<double> last(3, 0.0);
  bool ok = true;
  auto hook = [&](std::uint64_t t, const Policy&, const SimState& s) {
    ++expected_round;
    ok = ok && t == expected_round && s.completed_rounds() == t;
    double total = 0.0, counted = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      total += s.cumulative_utilities()[i];
      for (std::size_t j = 0; j < 4; ++j) counted += static_cast<double>(s.count(i, j));
    }
    // exactly one agent's cumulative utility moved this round
    double moved = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      moved += s.cumulative_utilities()[i] - last[i];
      last[i] = s.cumulative_utilities()[i];
    }
    shadow += moved;
    ok = ok && counted == static_cast<double>(t) && std::abs(total - shadow) <= 1e-9;
  };
  const auto trace = run_episode(inst, PolicyId::kDaUcb, config(5000, 1), eg, hook);
  CHECK(ok);
  CHECK(expected_round == 5000);
}

TEST_CASE("negative cumulative utility reports nsw 0 and is counted") {
  auto inst = make_instance(Matrix::from_rows({{0.01}, {0.01}}));
  inst.noise = {NoiseKind::kGaussian, 5.0};
  const auto eg = solve_eg(inst);
  auto cfg = config(200, 4);
  cfg.checkpoint_stride = 1;
  const auto trace = run_episode(inst, PolicyId::kRandom, cfg, eg);
  CHECK(trace.nsw_clamped_checkpoints > 0);
  for (const auto& c : trace.checkpoints) CHECK(c.nsw >= 0.0);
}

TEST_CASE("nsw is zero until every agent has positive utility") {
  const auto inst = uniform_instance(3, 3, 10);
  auto noiseless = inst;
  noiseless.noise = {NoiseKind::kNone, 0.0};
  const auto eg = solve_eg(noiseless);
  auto cfg = config(300, 2);
  cfg.checkpoint_stride = 1;
  std::vector<bool> positive_at;
  auto hook = [&](std::uint64_t, const Policy&, const SimState& s) {
    bool all = true;
    for (double u : s.cumulative_utilities()) all = all && u > 0.0;
    positive_at.push_back(all);
  };
  const auto trace = run_episode(noiseless, PolicyId::kRandom, cfg, eg, hook);
  for (std::size_t k = 0; k < trace.checkpoints.size(); ++k) {
    CHECK((trace.checkpoints[k].nsw > 0.0) == positive_at[k]);
  }
}

TEST_CASE("single agent has zero expected regret") {
  Rng rng(12);
  const auto inst_values = gen_uniform(1, 6, rng);
  auto inst = make_instance(inst_values, {NoiseKind::kNone, 0.0});
  const auto eg = solve_eg(inst);
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto trace = run_episode(inst, PolicyId::kUcb, config(2000, seed), eg);
    ratios.push_back(trace.final_regret / 2000.0);
  }
  const auto [mean, se] = mean_and_stderr(ratios);
  CHECK(std::abs(mean) <= 3.0 * se);
}

TEST_CASE("policy returning an invalid agent aborts the episode") {
  struct Rogue : Policy {
    PolicyId id() const override { return PolicyId::kRandom; }
    std::size_t choose(std::size_t, const SimState&, Rng&) override { return 99; }
  } rogue;
  const auto inst = uniform_instance(2, 2, 1);
  const auto eg = solve_eg(inst);
  CHECK_THROWS_AS(run_episode(inst, rogue, config(10, 1), eg), PolicyError);
}

TEST_CASE("mean_and_stderr") {
  auto [m1, s1] = mean_and_stderr(std::vector{4.0});
  CHECK(m1 == 4.0);
  CHECK(s1 == 0.0);
  auto [m, s] = mean_and_stderr(std::vector{1.0, 2.0, 3.0, 4.0});
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("run_batch with one replication equals the single episode") {
  BatchSpec spec;
  spec.make_instance = [](std::uint64_t seed) { return uniform_instance(4, 4, seed); };
  spec.policies = {PolicyId::kDaEtc};
  spec.config = config(3000, 42);
  spec.config.replications = 1;
  spec.keep_traces = true;
  const auto result = run_batch(spec);
  REQUIRE(result.summaries.size() == 1);
  const auto& s = result.summaries[0];

  const auto inst = uniform_instance(4, 4, mix_seed(42, kInstanceStream, 0));
  const auto eg = solve_eg(inst);
  const auto trace = run_episode(inst, PolicyId::kDaEtc, config(3000, mix_seed(42, policy_index(PolicyId::kDaEtc), 0)), eg);
  CHECK(s.mean_final_regret == trace.final_regret);
  CHECK(s.mean_l2_loss == trace.final_l2_loss);
  CHECK(s.stderr_final_regret == 0.0);
  CHECK(s.mean_onsw == eg.onsw);
  REQUIRE(s.checkpoint_t.size() == trace.checkpoints.size());
  for (std::size_t k = 0; k < s.checkpoint_t.size(); ++k) {
    CHECK(s.checkpoint_t[k] == trace.checkpoints[k].t);
    CHECK(s.mean_regret[k] == trace.checkpoints[k].regret);
  }
}

TEST_CASE("run_batch is independent of thread count and policy set") {
  BatchSpec spec;
  spec.make_instance = [](std::uint64_t seed) { return uniform_instance(3, 5, seed); };
  spec.policies = {PolicyId::kRandom, PolicyId::kDaUcb, PolicyId::kRdaUcb};
  spec.config = config(2000, 7);
  spec.config.replications = 6;
  spec.threads = 1;
  const auto serial = run_batch(spec);
  spec.threads = 8;
  const auto parallel = run_batch(spec);
  spec.policies = {PolicyId::kDaUcb};
  const auto alone = run_batch(spec);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(serial.summaries[p].mean_regret == parallel.summaries[p].mean_regret);
    CHECK(serial.summaries[p].stderr_regret == parallel.summaries[p].stderr_regret);
    CHECK(serial.summaries[p].mean_l2_loss == parallel.summaries[p].mean_l2_loss);
  }
  CHECK(alone.summaries[0].mean_regret == serial.summaries[1].mean_regret);
}

TEST_CASE("run_batch reports the failing seed") {
  BatchSpec spec;
  spec.make_instance = [](std::uint64_t seed) {
    auto inst = uniform_instance(2, 2, seed);
    inst.values(1, 0) = inst.values(1, 1) = 0.0;  // degenerate agent
    return inst;
  };
  spec.policies = {PolicyId::kRandom};
  spec.config = config(100, 3);
  spec.config.replications = 4;
  try {
    run_batch(spec);
    FAIL("expected BatchError");
  } catch (const BatchError& e) {
    CHECK(e.seed() == mix_seed(3, kInstanceStream, 0));
    CHECK(e.stage() == BatchError::Stage::kSetup);
    CHECK_THROWS_AS(std::rethrow_exception(e.cause()), DegenerateAgent);
  }
}

TEST_CASE("csv writers") {
  RunTrace trace;
  trace.checkpoints = {{1, 0.5, 0.25}, {2, -0.125, 1.0}};
  std::ostringstream out;
  write_trace_csv(out, trace);
  CHECK(out.str() == "t,regret,nsw\n1,0.5,0.25\n2,-0.125,1\n");

  PolicySummary s;
  s.checkpoint_t = {10};
  s.mean_regret = {0.1};
  s.stderr_regret = {0.0};
  std::ostringstream agg;
  write_aggregate_csv(agg, s);
  CHECK(agg.str() == "t,mean_regret,stderr\n10,0.10000000000000001,0\n");
}
