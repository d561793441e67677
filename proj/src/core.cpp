#include "fairdiv/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fairdiv {

namespace {

constexpr double kSimplexTol = 1e-12;

void check_probability_vector(std::span<const double> w, const char* what, bool strictly_positive) {
  if (w.empty()) throw InvalidInput(std::string(what) + " is empty");
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!std::isfinite(w[k]) || w[k] < 0.0 || (strictly_positive && w[k] <= 0.0)) {
      std::ostringstream msg;
      msg << what << "[" << k << "] = " << w[k] << " is out of range";
      throw InvalidInput(msg.str());
    }
    total += w[k];
  }
  if (std::abs(total - 1.0) > kSimplexTol * static_cast<double>(w.size()) + kSimplexTol) {
    std::ostringstream msg;
    msg << what << " sums to " << total << ", expected 1";
    throw InvalidInput(msg.str());
  }
}

}  // namespace

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix out(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != out.cols()) {
      std::ostringstream msg;
      msg << "row " << r << " has " << rows[r].size() << " entries, expected " << out.cols();
      throw InvalidInput(msg.str());
    }
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

double Matrix::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kBernoulli: return "bernoulli";
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kNone: return "none";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "bernoulli") return NoiseKind::kBernoulli;
  if (name == "gaussian") return NoiseKind::kGaussian;
  if (name == "none") return NoiseKind::kNone;
  throw InvalidInput("unknown noise kind '" + name + "' (expected bernoulli, gaussian or none)");
}

void validate(const DAParams& params, std::span<const double> budgets) {
  if (!(params.l > 0.0) || !(params.h >= params.l) || !std::isfinite(params.h)) {
    throw InvalidInput("DA range requires 0 < l <= h");
  }
  if (!(params.delta0 > 0.0) || !std::isfinite(params.delta0)) {
    throw InvalidInput("DA range requires delta0 > 0");
  }
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (!(params.multiplier_lower(budgets[i]) < params.multiplier_upper())) {
      std::ostringstream msg;
      msg << "empty multiplier interval for agent " << i;
      throw InvalidInput(msg.str());
    }
  }
}

void validate(const MarketInstance& instance) {
  const auto n = instance.num_agents();
  const auto m = instance.num_types();
  if (n == 0 || m == 0) throw InvalidInput("market needs at least one agent and one item type");
  if (instance.supply.size() != m) throw InvalidInput("supply length does not match item types");
  if (instance.budgets.size() != n) throw InvalidInput("budget length does not match agents");
  check_probability_vector(instance.supply, "supply", false);
  check_probability_vector(instance.budgets, "budgets", true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double v = instance.values(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream msg;
        msg << "value[" << i << "][" << j << "] = " << v << " is outside [0, 1]";
        throw InvalidInput(msg.str());
      }
    }
  }
  if (!(instance.noise.sigma >= 0.0)) throw InvalidInput("noise sigma must be nonnegative");
  validate(instance.da_params, instance.budgets);
}

std::vector<double> uniform_weights(std::size_t k) {
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

MarketInstance make_instance(Matrix values, NoiseSpec noise, DAParams params) {
  MarketInstance out;
  out.supply = uniform_weights(values.cols());
  out.budgets = uniform_weights(values.rows());
  out.values = std::move(values);
  out.noise = noise;
  out.da_params = params;
  return out;
}

std::uint64_t RunConfig::effective_stride() const {
  if (checkpoint_stride > 0) return checkpoint_stride;
  return std::max<std::uint64_t>(1, horizon / 1000);
}

void validate(const RunConfig& config) {
  if (config.horizon == 0) throw InvalidInput("horizon T must be positive");
  if (config.t0_override) {
    if (*config.t0_override == 0 || *config.t0_override > config.horizon) {
      throw InvalidInput("t0_override must lie in [1, T]");
    }
  }
  if (config.replications == 0) throw InvalidInput("replications must be at least 1");
}

double nsw(std::span<const double> utilities, std::span<const double> budgets) {
  if (utilities.size() != budgets.size()) throw InvalidInput("nsw: utilities and budgets differ in length");
  double log_sum = 0.0;
  bool annihilated = false;
  for (std::size_t i = 0; i < utilities.size(); ++i) {
    const double u = utilities[i];
    if (!(u >= 0.0)) {
      std::ostringstream msg;
      msg << "nsw: utility[" << i << "] = " << u << " is negative";
      throw InvalidInput(msg.str());
    }
    if (budgets[i] <= 0.0) continue;
    if (u == 0.0) {
      annihilated = true;
      continue;
    }
    log_sum += budgets[i] * std::log(u);
  }
  return annihilated ? 0.0 : std::exp(log_sum);
}

double regret_at(std::uint64_t t, double onsw, std::span<const double> cumulative_utilities,
                 std::span<const double> budgets) {
  return static_cast<double>(t) * onsw - nsw(cumulative_utilities, budgets);
}

double l2_utility_loss(std::span<const double> mean_utilities, std::span<const double> eg_utilities) {
  if (mean_utilities.size() != eg_utilities.size()) {
    throw InvalidInput("l2_utility_loss: vectors differ in length");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < mean_utilities.size(); ++i) {
    const double d = mean_utilities[i] - eg_utilities[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

double rms_utility_loss(std::span<const double> mean_utilities, std::span<const double> eg_utilities) {
  const double loss = l2_utility_loss(mean_utilities, eg_utilities);
  return mean_utilities.empty() ? 0.0 : loss / std::sqrt(static_cast<double>(mean_utilities.size()));
}

}  // namespace fairdiv
