#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "fairdiv/da.hpp"
#include "fairdiv/sim_state.hpp"

using namespace fairdiv;

TEST_CASE("da_multiplier examples") {
  const DAParams p;
  CHECK(da_multiplier(0.0, 0.5, p) == doctest::Approx(1.95));
  CHECK(da_multiplier(1.0, 0.5, p) == doctest::Approx(0.5));
  CHECK(da_multiplier(10.0, 0.5, p) == doctest::Approx(0.5 / 1.95));
}

TEST_CASE("da_iter first round") {
  const DAParams p;
  DAState s(2);
  const std::vector<double> b{0.5, 0.5};
  CHECK(da_iter(s, std::vector{0.4, 0.9}, b, p) == 1);
  CHECK(s.mean_utilities[0] == 0.0);
  CHECK(s.mean_utilities[1] == doctest::Approx(0.9));
  CHECK(s.da_round == 2);
  CHECK(s.payments_total == doctest::Approx(1.95 * 0.9));
}

TEST_CASE("da_iter ties go to the lowest index") {
  const DAParams p;
  DAState s(2);
  s.mean_utilities = {0.5, 0.5};  // beta = 1 for both
  s.da_round = 2;
  CHECK(da_iter(s, std::vector{0.5, 0.5}, std::vector{0.5, 0.5}, p) == 0);
}

TEST_CASE("da_iter running mean at t = 3") {
  const DAParams p;
  DAState s(2);
  s.mean_utilities = {0.6, 0.4};
  s.da_round = 3;
  // beta_0 = 0.5/0.6, beta_1 = 0.5/0.4; agent 0 bids 0.9*0.833 > agent 1's 0.1*1.25
  CHECK(da_iter(s, std::vector{0.9, 0.1}, std::vector{0.5, 0.5}, p) == 0);
  CHECK(s.mean_utilities[0] == doctest::Approx(0.7));
  CHECK(s.mean_utilities[1] == doctest::Approx(0.4 * 2.0 / 3.0));
  CHECK(s.da_round == 4);
}

TEST_CASE("da_iter rejects an empty market") {
  DAState s(0);
  CHECK_THROWS(da_iter(s, std::vector<double>{}, std::vector<double>{}, DAParams{}));
}

TEST_CASE("reset restarts the local round") {
  DAState s(3);
  da_iter(s, std::vector{0.1, 0.2, 0.3}, std::vector{0.2, 0.3, 0.5}, DAParams{});
  s.reset();
  CHECK(s.da_round == 1);
  CHECK(s.payments_total == 0.0);
  for (double u : s.mean_utilities) CHECK(u == 0.0);
}

TEST_CASE("winner is invariant under common scaling") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const DAParams p;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng() % 6;
    DAState a(n);
    for (auto& u : a.mean_utilities) u = unif(rng) * 0.3;
    a.da_round = 1 + rng() % 50;
    DAState b = a;
    std::vector<double> v(n), scaled(n);
    const double c = 0.1 + 5.0 * unif(rng);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = unif(rng);
      scaled[i] = c * v[i];
    }
    const std::vector<double> budgets(n, 1.0 / n);
    CHECK(da_iter(a, v, budgets, p) == da_iter(b, scaled, budgets, p));
  }
}

TEST_CASE("no agent is starved over long windows") {
  // Equal budgets, plugged values in [l, h]: every window of n (h (1+d)^2 / l)^2
  // rounds contains a win for every agent.
  std::mt19937_64 rng(22);
  DAParams p;
  p.l = 0.2;
  p.h = 0.8;
  const std::size_t n = 4;
  const auto window = static_cast<std::size_t>(
      std::ceil(n * std::pow(p.h * (1 + p.delta0) * (1 + p.delta0) / p.l, 2)));
  const std::vector<double> budgets(n, 1.0 / n);
  for (int rep = 0; rep < 5; ++rep) {
    DAState s(n);
    std::vector<std::size_t> last_win(n, 0);
    std::size_t longest_drought = 0;
    const std::size_t rounds = 20 * window;
    for (std::size_t t = 1; t <= rounds; ++t) {
      std::vector<double> v(n);
      for (auto& x : v) x = p.l + (p.h - p.l) * uniform01(rng);
      last_win[da_iter(s, v, budgets, p)] = t;
      for (std::size_t i = 0; i < n; ++i) longest_drought = std::max(longest_drought, t - last_win[i]);
    }
    CHECK(longest_drought < window);
  }
}

TEST_CASE("running mean matches an independent accumulator") {
  std::mt19937_64 rng(23);
  const DAParams p;
  const std::size_t n = 5;
  const std::vector<double> budgets(n, 0.2);
  DAState s(n);
  std::vector<double> won(n, 0.0);
  for (std::size_t t = 1; t <= 5000; ++t) {
    std::vector<double> v(n);
    for (auto& x : v) x = uniform01(rng);
    const auto w = da_iter(s, v, budgets, p);
    won[w] += v[w];
  }
  for (std::size_t i = 0; i < n; ++i) CHECK(s.mean_utilities[i] == doctest::Approx(won[i] / 5000.0).epsilon(1e-9));
}
