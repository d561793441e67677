#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "fairdiv/data.hpp"
#include "fairdiv/eg_solver.hpp"
#include "fairdiv/policies.hpp"
#include "fairdiv/sim.hpp"

using namespace fairdiv;

namespace {

PolicyContext context(std::size_t n, std::size_t m, std::uint64_t horizon, DAParams params = {}) {
  PolicyContext ctx;
  ctx.num_agents = n;
  ctx.num_types = m;
  ctx.horizon = horizon;
  ctx.budgets = uniform_weights(n);
  ctx.da_params = params;
  return ctx;
}

// Drives a policy on an explicit type stream with noise-free feedback.
struct Driver {
  const Matrix& values;
  SimState state;
  Rng rng{99};

  explicit Driver(const Matrix& v) : values(v), state(v.rows(), v.cols()) {}

  std::size_t step(Policy& policy, std::size_t type) {
    const auto w = policy.choose(type, state, rng);
    state.record(w, type, values(w, type));
    policy.observe(w, type, values(w, type), state);
    return w;
  }
};

}  // namespace

TEST_CASE("policy identifiers") {
  for (auto id : benchmark_policies()) CHECK(parse_policy(policy_name(id)) == id);
  CHECK(benchmark_policies().size() == 6);
  CHECK(policy_name(PolicyId::kDaGreedy) == "da-grdy");
  CHECK(parse_policy("da-oracle") == PolicyId::kDaOracle);
  CHECK_FALSE(parse_policy("thompson").has_value());
  CHECK_THROWS_AS(make_policy(PolicyId::kDaOracle, context(2, 2, 10)), InvalidInput);
}

TEST_CASE("ucb_value") {
  SimState s(2, 1);
  CHECK(ucb_value(s, 0, 0, 1) == 1.0);
  for (double u : {0.4, 0.0, 0.2, 0.2}) s.record(0, 0, u);  // mean 0.2, N = 4
  CHECK(ucb_value(s, 0, 0, 7) == doctest::Approx(0.2 + std::sqrt(std::log(7.0) / 8.0)));
  SimState c(1, 1);
  c.record(0, 0, 0.95);
  CHECK(ucb_value(c, 0, 0, 8) == 1.0);
}

TEST_CASE("clipped_ucb_value") {
  DAParams p;
  p.l = 0.01;
  p.h = 1.0;
  CHECK(clipped_ucb_value(0.0, 0, 100, p) == 1.0);
  CHECK(clipped_ucb_value(0.3, 2, 3, p) == 1.0);
  CHECK(clipped_ucb_value(0.1, 100, 3, p) == doctest::Approx(0.1 + std::sqrt(2.0 * std::log(3.0) / 200.0)));
  p.l = 0.5;
  CHECK(clipped_ucb_value(0.0, 1000000, 3, p) == 0.5);
}

TEST_CASE("explore_length") {
  CHECK(explore_length(1000, 10, 10) == 465);
  CHECK(explore_length(100000, 10, 10) == 10000);
  CHECK(explore_length(5, 10, 10) == 5);     // clamped to T
  CHECK(explore_length(10, 3, 3) == 10);
  CHECK(explore_length(1000, 50, 50) == 1000);  // nm > T: the T cap wins
  CHECK(explore_length(1000, 10, 10, 17) == 17);
}

TEST_CASE("random policy") {
  Rng rng(5);
  SimState s(1, 3);
  RandomPolicy single(1);
  for (int k = 0; k < 100; ++k) CHECK(single.choose(k % 3, s, rng) == 0);

  RandomPolicy four(4);
  SimState s4(4, 2);
  std::vector<std::vector<double>> freq(2, std::vector<double>(4, 0.0));
  const int draws = 1000000;
  for (int k = 0; k < draws; ++k) freq[k % 2][four.choose(k % 2, s4, rng)] += 1.0;
  for (int type = 0; type < 2; ++type) {
    for (double f : freq[type]) CHECK(std::abs(f / (draws / 2) - 0.25) <= 0.01);
  }
}

TEST_CASE("ucb policy examples") {
  Rng rng(1);
  UcbPolicy ucb;
  SimState fresh(3, 1);
  CHECK(ucb.choose(0, fresh, rng) == 0);

  SimState greedy(2, 1);
  for (int k = 0; k < 200000; ++k) {
    greedy.record(0, 0, k % 5 == 0 ? 1.0 : 0.0);  // mean 0.2
    greedy.record(1, 0, k % 10 == 0 ? 0.0 : 1.0);  // mean 0.9
  }
  CHECK(ucb.choose(0, greedy, rng) == 1);

  // Agent 0: mean 0.2 with a big bonus; agent 1: mean 0.65 with a small one.
  SimState mixed(2, 1);
  mixed.record(0, 0, 0.4);
  mixed.record(0, 0, 0.0);
  for (int k = 0; k < 1000; ++k) mixed.record(1, 0, 0.65);
  CHECK(ucb_value(mixed, 0, 0, mixed.round()) > ucb_value(mixed, 1, 0, mixed.round()));
  CHECK(ucb.choose(0, mixed, rng) == 0);
}

TEST_CASE("da-grdy starts with a tie and matches true-value DA once estimates are exact") {
  const auto values = Matrix::from_rows({{0.3, 0.7, 0.5}, {0.6, 0.2, 0.9}, {0.4, 0.4, 0.1}});
  const auto ctx = context(3, 3, 1000);
  DaGreedyPolicy fresh(ctx);
  Driver d0(values);
  CHECK(fresh.choose(1, d0.state, d0.rng) == 0);

  Driver d(values);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) d.state.record(i, j, values(i, j));
  DaGreedyPolicy greedy(ctx);
  DaOraclePolicy oracle(ctx, values);
  Rng types(3);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t j = types() % 3;
    const auto w = d.step(greedy, j);
    CHECK(oracle.choose(j, d.state, d.rng) == w);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(greedy.da_state().mean_utilities[i] == doctest::Approx(oracle.da_state().mean_utilities[i]).epsilon(1e-12));
  }
}

TEST_CASE("da-grdy underexplores a pair whose first draw is zero") {
  // Agent 0 wins round 1 on the tie; with probability 0.9 it sees 0 and is
  // shut out, since agent 1 (value 1) never drops to zero.
  auto inst = make_instance(Matrix::from_rows({{0.1}, {1.0}}));
  const auto eg = solve_eg(inst);
  const int runs = 2000;
  int frozen = 0;
  for (int r = 0; r < runs; ++r) {
    RunConfig cfg;
    cfg.horizon = 200;
    cfg.seed = mix_seed(77, 0, r);
    const auto trace = run_episode(inst, PolicyId::kDaGreedy, cfg, eg);
    frozen += trace.per_pair_counts(0, 0) == 1.0 ? 1 : 0;
  }
  CHECK(static_cast<double>(frozen) / runs >= 0.9 - 3 * std::sqrt(0.09 / runs));
}

TEST_CASE("da-etc explores, freezes once, then commits") {
  Rng gen(8);
  const auto values = gen_uniform(3, 4, gen);
  auto ctx = context(3, 4, 500);
  ctx.t0_override = 120;
  DaEtcPolicy etc(ctx);
  DaOraclePolicy oracle(ctx, values);
  Driver d(values);
  Rng types(4);
  Matrix frozen_at_commit;
  for (std::uint64_t t = 1; t <= 500; ++t) {
    const std::size_t j = types() % 4;
    if (t <= 120) {
      CHECK(etc.phase() == DaEtcPolicy::Phase::kExplore);
      d.step(etc, j);
      if (t == 120) {
        REQUIRE(etc.phase() == DaEtcPolicy::Phase::kCommit);
        frozen_at_commit = etc.frozen_estimator();
      }
      continue;
    }
    CHECK(etc.da_state().da_round == t - 120);
    const auto w = d.step(etc, j);
    CHECK(oracle.choose(j, d.state, d.rng) == w);
  }
  CHECK(etc.frozen_estimator() == frozen_at_commit);
  // noise-free feedback: every visited pair is exact
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(frozen_at_commit(i, j) == doctest::Approx(values(i, j)).epsilon(1e-12));
}

TEST_CASE("da-etc falls back to 1 for pairs never explored") {
  const auto values = Matrix(3, 3, 0.4);
  auto ctx = context(3, 3, 50);
  ctx.t0_override = 2;
  DaEtcPolicy etc(ctx);
  Driver d(values);
  d.step(etc, 0);
  d.step(etc, 0);
  REQUIRE(etc.phase() == DaEtcPolicy::Phase::kCommit);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(etc.frozen_estimator()(i, j) == doctest::Approx(d.state.count(i, j) > 0 ? 0.4 : 1.0).epsilon(1e-12));
    }
  }
  CHECK(etc.t0() == 2);
}

TEST_CASE("da-ucb plugs capped ucb values") {
  Rng gen(9);
  const auto values = gen_uniform(4, 3, gen);
  DaUcbPolicy pol(context(4, 3, 3000));
  Driver d(values);
  d.step(pol, 0);
  for (double v : pol.last_plugged()) CHECK(v == 1.0);
  Rng types(1);
  for (int t = 0; t < 3000; ++t) {
    const std::size_t j = types() % 3;
    const std::uint64_t round = d.state.round();
    std::vector<double> expected(4);
    for (std::size_t i = 0; i < 4; ++i) expected[i] = ucb_value(d.state, i, j, round);
    d.step(pol, j);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(pol.last_plugged()[i] == expected[i]);
      CHECK(pol.last_plugged()[i] >= 0.0);
      CHECK(pol.last_plugged()[i] <= 1.0);
    }
    CHECK(pol.da_state().da_round == d.state.round());
  }
}

TEST_CASE("rda-ucb restarts exactly on power-of-two counts") {
  Rng gen(10);
  const auto values = gen_uniform(3, 3, gen);
  DAParams p;
  p.l = 0.05;
  p.h = 0.95;
  const std::uint64_t horizon = 4000;
  RdaUcbPolicy pol(context(3, 3, horizon, p));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(pol.frozen_values()(i, j) == p.h);
  Driver d(values);
  Rng types(2);
  std::uint64_t expected_restarts = 0;
  for (std::uint64_t t = 1; t <= horizon; ++t) {
    const std::size_t j = types() % 3;
    const auto w = d.step(pol, j);
    for (double v : pol.last_plugged()) {
      CHECK(v >= p.l);
      CHECK(v <= p.h);
    }
    const auto c = d.state.count(w, j);
    const bool trigger = c >= 2 && c <= 2048 && (c & (c - 1)) == 0;
    if (trigger) {
      ++expected_restarts;
      CHECK(pol.instance_start() == t + 1);
      CHECK(pol.da_state().da_round == 1);
      for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
          CHECK(pol.frozen_values()(a, b) ==
                clipped_ucb_value(d.state.estimate(a, b), d.state.count(a, b), horizon, p));
        }
      }
    } else {
      CHECK(pol.da_state().da_round == t - pol.instance_start() + 2);
    }
    CHECK(pol.restart_count() == expected_restarts);
  }
  CHECK(pol.restart_count() <= 3 * 3 * 11);
}
