#include "fairdiv/eg_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

namespace fairdiv {

namespace {

constexpr std::size_t kNpos = static_cast<std::size_t>(-1);

std::vector<double> utilities_of(const MarketInstance& inst, const Matrix& x) {
  std::vector<double> u(inst.num_agents(), 0.0);
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    for (std::size_t j = 0; j < inst.num_types(); ++j) u[i] += inst.supply[j] * inst.values(i, j) * x(i, j);
  }
  return u;
}

// p_j = max_i (B_i / u_i) v_{i,j}; zero-supply types are priced at zero.
std::vector<double> supporting_prices(const MarketInstance& inst, std::span<const double> multipliers) {
  std::vector<double> p(inst.num_types(), 0.0);
  for (std::size_t j = 0; j < inst.num_types(); ++j) {
    if (inst.supply[j] <= 0.0) continue;
    for (std::size_t i = 0; i < inst.num_agents(); ++i) p[j] = std::max(p[j], multipliers[i] * inst.values(i, j));
  }
  return p;
}

EGSolution finalize(const MarketInstance& inst, Matrix x, std::size_t iterations) {
  for (auto& e : x.data()) e = std::clamp(e, 0.0, 1.0);
  EGSolution sol;
  sol.utilities = utilities_of(inst, x);
  sol.multipliers.resize(inst.num_agents());
  for (std::size_t i = 0; i < inst.num_agents(); ++i) {
    sol.multipliers[i] = sol.utilities[i] > 0.0 ? inst.budgets[i] / sol.utilities[i]
                                                : std::numeric_limits<double>::infinity();
  }
  sol.prices = supporting_prices(inst, sol.multipliers);
  sol.onsw = nsw(sol.utilities, inst.budgets);
  sol.duality_gap = eg_duality_gap(inst, sol.utilities);
  sol.allocation = std::move(x);
  sol.iterations = iterations;
  return sol;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t size) : parent_(size) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[a] = b;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

struct Edge {
  std::size_t agent;
  std::size_t type;
};

std::size_t other_end(const Edge& e, std::size_t node, std::size_t n) { return node < n ? n + e.type : e.agent; }

// Prices, multipliers and spending for a candidate equilibrium support that
// is a forest over agents (nodes 0..n-1) and item types (nodes n..n+m-1).
struct ForestSolution {
  std::vector<double> level;     // multiplier for agent nodes, price for type nodes
  std::vector<double> spending;  // per edge; may be negative for a wrong support
};

// Tightness fixes multipliers and prices up to one scale per component, and
// budget balance fixes the scale. Spending follows by peeling leaves. Returns
// nothing when an agent has no edge or a valued type has none.
std::optional<ForestSolution> solve_on_forest(const MarketInstance& inst, const std::vector<Edge>& edges) {
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_types();
  std::vector<std::vector<std::size_t>> incident(n + m);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    incident[edges[e].agent].push_back(e);
    incident[n + edges[e].type].push_back(e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (incident[i].empty()) return std::nullopt;
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (inst.supply[j] <= 0.0 || !incident[n + j].empty()) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (inst.values(i, j) > 0.0) return std::nullopt;  // would stay unsold at a positive price
    }
  }

  ForestSolution out;
  out.level.assign(n + m, 0.0);
  std::vector<std::size_t> component(n + m, kNpos);
  std::vector<double> comp_budget, comp_value;
  for (std::size_t root = 0; root < n; ++root) {
    if (component[root] != kNpos) continue;
    const std::size_t c = comp_budget.size();
    comp_budget.push_back(0.0);
    comp_value.push_back(0.0);
    std::vector<std::size_t> stack{root};
    component[root] = c;
    out.level[root] = 1.0;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node < n) {
        comp_budget[c] += inst.budgets[node];
      } else {
        comp_value[c] += inst.supply[node - n] * out.level[node];
      }
      for (std::size_t e : incident[node]) {
        const std::size_t other = node < n ? n + edges[e].type : edges[e].agent;
        if (component[other] != kNpos) continue;
        const double v = inst.values(edges[e].agent, edges[e].type);
        out.level[other] = node < n ? out.level[node] * v : out.level[node] / v;
        component[other] = c;
        stack.push_back(other);
      }
    }
  }
  for (std::size_t node = 0; node < n + m; ++node) {
    if (component[node] == kNpos) continue;
    const std::size_t c = component[node];
    if (!(comp_value[c] > 0.0)) return std::nullopt;
    out.level[node] *= comp_budget[c] / comp_value[c];
  }

  // A leaf's whole remaining budget (agent) or value (type) flows through
  // its last edge.
  std::vector<double> remaining(n + m, 0.0);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = inst.budgets[i];
  for (std::size_t j = 0; j < m; ++j) remaining[n + j] = inst.supply[j] * out.level[n + j];
  std::vector<std::size_t> degree(n + m);
  for (std::size_t node = 0; node < n + m; ++node) degree[node] = incident[node].size();
  std::vector<bool> used(edges.size(), false);
  out.spending.assign(edges.size(), 0.0);
  std::vector<std::size_t> leaves;
  for (std::size_t node = 0; node < n + m; ++node) {
    if (degree[node] == 1) leaves.push_back(node);
  }
  while (!leaves.empty()) {
    const std::size_t leaf = leaves.back();
    leaves.pop_back();
    if (degree[leaf] != 1) continue;
    std::size_t edge = kNpos;
    for (std::size_t e : incident[leaf]) {
      if (!used[e]) edge = e;
    }
    used[edge] = true;
    const std::size_t other = other_end(edges[edge], leaf, n);
    out.spending[edge] = remaining[leaf];
    remaining[other] -= remaining[leaf];
    remaining[leaf] = 0.0;
    --degree[leaf];
    if (--degree[other] == 1) leaves.push_back(other);
  }
  return out;
}

Matrix allocation_of(const MarketInstance& inst, const std::vector<Edge>& edges, const ForestSolution& sol) {
  const std::size_t n = inst.num_agents();
  Matrix x(n, inst.num_types(), 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::size_t j = edges[e].type;
    x(edges[e].agent, j) = std::max(0.0, sol.spending[e]) / (inst.supply[j] * sol.level[n + j]);
  }
  return x;
}

// Edges on the forest path between two nodes, or empty if disconnected.
std::vector<std::size_t> forest_path(const std::vector<Edge>& edges, std::size_t n, std::size_t m, std::size_t from,
                                     std::size_t to) {
  std::vector<std::vector<std::size_t>> incident(n + m);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    incident[edges[e].agent].push_back(e);
    incident[n + edges[e].type].push_back(e);
  }
  std::vector<std::size_t> via(n + m, kNpos);
  std::vector<bool> seen(n + m, false);
  std::vector<std::size_t> queue{from};
  seen[from] = true;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t node = queue[head];
    for (std::size_t e : incident[node]) {
      const std::size_t other = other_end(edges[e], node, n);
      if (seen[other]) continue;
      seen[other] = true;
      via[other] = e;
      queue.push_back(other);
    }
  }
  std::vector<std::size_t> path;
  if (!seen[to]) return path;
  for (std::size_t node = to; node != from; node = other_end(edges[via[node]], node, n)) path.push_back(via[node]);
  return path;
}

struct Pricing {
  double worst_ratio = 0.0;  // max_{i,j} beta_i v_ij / p_j
  Edge entering{};
  double most_negative = 0.0;
  std::size_t leaving = kNpos;
};

Pricing price_forest(const MarketInstance& inst, const ForestSolution& sol) {
  const std::size_t n = inst.num_agents();
  Pricing out;
  for (std::size_t e = 0; e < sol.spending.size(); ++e) {
    if (sol.spending[e] < out.most_negative) {
      out.most_negative = sol.spending[e];
      out.leaving = e;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < inst.num_types(); ++j) {
      if (inst.supply[j] <= 0.0 || inst.values(i, j) <= 0.0) continue;
      const double ratio = sol.level[i] * inst.values(i, j) / sol.level[n + j];
      if (ratio > out.worst_ratio) {
        out.worst_ratio = ratio;
        out.entering = {i, j};
      }
    }
  }
  return out;
}

// Pivots on a support forest until it carries nonnegative spending and
// dual-feasible prices: negative-spending edges leave, the most violated
// pair enters (evicting the best edge of any cycle it closes).
std::optional<Matrix> pivot_to_equilibrium(const MarketInstance& inst, std::vector<Edge> forest) {
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_types();
  constexpr double kRatioTol = 1e-13;
  constexpr double kSpendTol = 1e-15;
  for (std::size_t pivot = 0; pivot < 8 * (n + m); ++pivot) {
    auto sol = solve_on_forest(inst, forest);
    if (!sol) return std::nullopt;
    const auto pricing = price_forest(inst, *sol);
    if (pricing.leaving != kNpos && pricing.most_negative < -kSpendTol) {
      forest.erase(forest.begin() + static_cast<std::ptrdiff_t>(pricing.leaving));
      continue;
    }
    if (pricing.worst_ratio <= 1.0 + kRatioTol) return allocation_of(inst, forest, *sol);

    const Edge in = pricing.entering;
    const auto cycle = forest_path(forest, n, m, in.agent, n + in.type);
    forest.push_back(in);
    if (cycle.empty()) continue;
    // Evict the cycle edge whose removal leaves the least negative spending.
    std::size_t best_edge = kNpos;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t e : cycle) {
      auto trial = forest;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(e));
      const auto trial_sol = solve_on_forest(inst, trial);
      if (!trial_sol) continue;
      const double score = *std::min_element(trial_sol->spending.begin(), trial_sol->spending.end());
      if (score > best_score) {
        best_score = score;
        best_edge = e;
      }
    }
    if (best_edge == kNpos) return std::nullopt;
    forest.erase(forest.begin() + static_cast<std::ptrdiff_t>(best_edge));
  }
  return std::nullopt;
}

// A computed gap carries rounding error of a few ulps per term, so a gap is
// accepted only when it stays under the tolerance after adding that slack.
// In particular gap_tol = 0 can never be certified.
bool certified(const MarketInstance& inst, double gap, double gap_tol) {
  const double slack = 4.0 * static_cast<double>(inst.num_agents() + inst.num_types()) *
                       std::numeric_limits<double>::epsilon();
  return gap + slack <= gap_tol;
}

std::optional<Matrix> polish(const MarketInstance& inst, const Matrix& x, std::span<const double> u, double gap_tol) {
  const std::size_t n = inst.num_agents();
  const std::size_t m = inst.num_types();
  std::vector<double> beta(n);
  for (std::size_t i = 0; i < n; ++i) beta[i] = inst.budgets[i] / u[i];
  const auto prices = supporting_prices(inst, beta);

  for (double slack : {1e-3, 1e-1}) {
    std::vector<Edge> candidates;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (inst.supply[j] <= 0.0 || inst.values(i, j) <= 0.0) continue;
        if (beta[i] * inst.values(i, j) >= (1.0 - slack) * prices[j]) candidates.push_back({i, j});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](const Edge& a, const Edge& b) { return x(a.agent, a.type) > x(b.agent, b.type); });
    DisjointSets sets(n + m);
    std::vector<Edge> forest;
    for (const auto& e : candidates) {
      if (sets.unite(e.agent, n + e.type)) forest.push_back(e);
    }
    auto exact = pivot_to_equilibrium(inst, std::move(forest));
    if (!exact) continue;
    const auto exact_u = utilities_of(inst, *exact);
    if (std::any_of(exact_u.begin(), exact_u.end(), [](double v) { return !(v > 0.0); })) continue;
    if (certified(inst, eg_duality_gap(inst, exact_u), gap_tol)) return exact;
  }
  return std::nullopt;
}

bool polish_due(std::size_t iteration) {
  return iteration >= 8 && (iteration % 256 == 0 || (iteration & (iteration - 1)) == 0);
}

}  // namespace

DegenerateAgent::DegenerateAgent(std::size_t agent)
    : InvalidInput("agent " + std::to_string(agent) + " values every supplied item type at zero"), agent_(agent) {}

double eg_duality_gap(const MarketInstance& instance, std::span<const double> utilities) {
  std::vector<double> beta(instance.num_agents());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (!(utilities[i] > 0.0)) return std::numeric_limits<double>::infinity();
    beta[i] = instance.budgets[i] / utilities[i];
  }
  const auto prices = supporting_prices(instance, beta);
  double dual_spend = 0.0;
  for (std::size_t j = 0; j < prices.size(); ++j) dual_spend += instance.supply[j] * prices[j];
  const double budget_total = std::accumulate(instance.budgets.begin(), instance.budgets.end(), 0.0);
  return dual_spend - budget_total;
}

EGSolution solve_eg(const MarketInstance& instance, const SolveOptions& options) {
  validate(instance);
  if (!(options.gap_tol >= 0.0)) throw InvalidInput("gap_tol must be nonnegative");
  const std::size_t n = instance.num_agents();
  const std::size_t m = instance.num_types();

  std::size_t active_types = 0;
  for (std::size_t j = 0; j < m; ++j) active_types += instance.supply[j] > 0.0 ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool reachable = false;
    for (std::size_t j = 0; j < m; ++j) reachable = reachable || instance.supply[j] * instance.values(i, j) > 0.0;
    if (!reachable) throw DegenerateAgent(i);
  }

  Matrix bids(n, m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (instance.supply[j] > 0.0) bids(i, j) = instance.budgets[i] / static_cast<double>(active_types);
    }
  }

  Matrix x(n, m, 0.0);
  Matrix best_x;
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t best_iter = 0;
  for (std::size_t iter = 1; iter <= std::max<std::size_t>(options.max_iters, 1); ++iter) {
    for (std::size_t j = 0; j < m; ++j) {
      double column = 0.0;
      for (std::size_t i = 0; i < n; ++i) column += bids(i, j);
      for (std::size_t i = 0; i < n; ++i) x(i, j) = column > 0.0 ? bids(i, j) / column : 0.0;
    }
    const auto u = utilities_of(instance, x);
    const double gap = eg_duality_gap(instance, u);
    if (gap < best_gap) {
      best_gap = gap;
      best_x = x;
      best_iter = iter;
    }
    if (certified(instance, gap, options.gap_tol)) return finalize(instance, x, iter);
    if (polish_due(iter)) {
      if (auto exact = polish(instance, x, u, options.gap_tol)) return finalize(instance, std::move(*exact), iter);
    }
    if (iter == options.max_iters) break;
    for (std::size_t i = 0; i < n; ++i) {
      const double scale = instance.budgets[i] / u[i];
      for (std::size_t j = 0; j < m; ++j) bids(i, j) = scale * instance.supply[j] * instance.values(i, j) * x(i, j);
    }
  }
  std::ostringstream msg;
  msg << "equilibrium solver did not reach gap " << options.gap_tol << " within " << options.max_iters
      << " iterations (best gap " << best_gap << ")";
  throw SolverNotConverged(msg.str(), finalize(instance, std::move(best_x), best_iter));
}

EGSolution brute_force_eg(const MarketInstance& instance, double grid_step) {
  validate(instance);
  const std::size_t n = instance.num_agents();
  const std::size_t m = instance.num_types();
  if (n * m > 9) throw InvalidInput("brute_force_eg supports at most 9 agent-type pairs");
  if (!(grid_step > 0.0) || grid_step > 1e-2) throw InvalidInput("grid_step must lie in (0, 0.01]");

  auto objective = [&](const Matrix& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double u = 0.0;
      for (std::size_t j = 0; j < m; ++j) u += instance.supply[j] * instance.values(i, j) * x(i, j);
      if (!(u > 0.0)) return -std::numeric_limits<double>::infinity();
      total += instance.budgets[i] * std::log(u);
    }
    return total;
  };

  // Lattice points of one column: compositions of `units` into n parts.
  auto compositions = [n](int units) {
    std::vector<std::vector<int>> out;
    std::vector<int> parts(n, 0);
    auto rec = [&](auto&& self, std::size_t k, int left) -> void {
      if (k + 1 == n) {
        parts[k] = left;
        out.push_back(parts);
        return;
      }
      for (int a = 0; a <= left; ++a) {
        parts[k] = a;
        self(self, k + 1, left - a);
      }
    };
    rec(rec, 0, units);
    return out;
  };

  constexpr int kCoarseUnits = 10;
  const auto column_points = compositions(kCoarseUnits);
  Matrix x(n, m, 0.0);
  Matrix best(n, m, 0.0);
  double best_value = -std::numeric_limits<double>::infinity();
  std::size_t evaluations = 0;
  std::vector<std::size_t> choice(m, 0);
  while (true) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) x(i, j) = column_points[choice[j]][i] / static_cast<double>(kCoarseUnits);
    }
    const double value = objective(x);
    ++evaluations;
    if (value > best_value) {
      best_value = value;
      best = x;
    }
    std::size_t k = 0;
    while (k < m && ++choice[k] == column_points.size()) choice[k++] = 0;
    if (k == m) break;
  }

  // Per-column moves: shift one lattice unit from agent a to agent b.
  std::vector<std::pair<std::size_t, std::size_t>> moves{{0, 0}};
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b) moves.emplace_back(a, b);
    }
  }
  double spacing = 1.0 / kCoarseUnits;
  while (true) {
    spacing = std::max(spacing / 2.0, grid_step);
    bool improved = true;
    while (improved) {
      improved = false;
      Matrix centre = best;
      std::vector<std::size_t> pick(m, 0);
      while (true) {
        x = centre;
        bool inside = true;
        for (std::size_t j = 0; j < m && inside; ++j) {
          const auto [from, to] = moves[pick[j]];
          if (from == to) continue;
          x(from, j) -= spacing;
          x(to, j) += spacing;
          inside = x(from, j) >= -1e-12 && x(to, j) <= 1.0 + 1e-12;
          x(from, j) = std::max(0.0, x(from, j));
          x(to, j) = std::min(1.0, x(to, j));
        }
        if (inside) {
          const double value = objective(x);
          ++evaluations;
          if (value > best_value + 1e-15) {
            best_value = value;
            best = x;
            improved = true;
          }
        }
        std::size_t k = 0;
        while (k < m && ++pick[k] == moves.size()) pick[k++] = 0;
        if (k == m) break;
      }
    }
    if (spacing <= grid_step) break;
  }
  return finalize(instance, std::move(best), evaluations);
}

std::string KKTViolation::describe() const {
  static constexpr const char* kNames[] = {"feasibility", "dual feasibility", "tightness", "clearance", "budget"};
  std::ostringstream out;
  out << kNames[static_cast<int>(kind)];
  if (agent != kNpos) out << " agent=" << agent;
  if (type != kNpos) out << " type=" << type;
  out << " residual=" << residual;
  return out.str();
}

std::vector<KKTViolation> verify_kkt(const MarketInstance& instance, const EGSolution& solution, double tol) {
  using Kind = KKTViolation::Kind;
  const std::size_t n = instance.num_agents();
  const std::size_t m = instance.num_types();
  const auto& x = solution.allocation;
  const auto& beta = solution.multipliers;
  const auto& p = solution.prices;
  std::vector<KKTViolation> out;

  for (std::size_t j = 0; j < m; ++j) {
    double column = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      column += x(i, j);
      if (x(i, j) < -tol) out.push_back({Kind::kFeasibility, i, j, -x(i, j)});
    }
    if (column > 1.0 + tol) out.push_back({Kind::kFeasibility, kNpos, j, column - 1.0});
    if (p[j] > tol && column < 1.0 - tol) out.push_back({Kind::kClearance, kNpos, j, 1.0 - column});
  }
  for (std::size_t i = 0; i < n; ++i) {
    double spent = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (instance.supply[j] <= 0.0) continue;
      const double bid = beta[i] * instance.values(i, j);
      if (bid - p[j] > tol) out.push_back({Kind::kDualFeasibility, i, j, bid - p[j]});
      if (x(i, j) > 1e-6 && p[j] - bid > tol) out.push_back({Kind::kTightness, i, j, p[j] - bid});
      spent += instance.supply[j] * p[j] * x(i, j);
    }
    if (std::abs(spent - instance.budgets[i]) > tol) {
      out.push_back({Kind::kBudget, i, kNpos, spent - instance.budgets[i]});
    }
  }
  return out;
}

}  // namespace fairdiv
