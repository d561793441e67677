#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairdiv {

/// Raised when a precondition on caller-supplied data is violated.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Rows index agents, columns item types.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Builds from nested rows; throws InvalidInput on ragged input.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double sum() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class NoiseKind { kBernoulli, kGaussian, kNone };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kBernoulli;
  double sigma = 0.0;  // standard deviation, gaussian only
};

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

/// Range parameters of the dual-averaging multiplier projection.
struct DAParams {
  double l = 1.0;
  double h = 1.0;
  double delta0 = 0.95;

  double multiplier_lower(double budget) const { return budget / (h * (1.0 + delta0)); }
  double multiplier_upper() const { return (1.0 + delta0) / l; }
};

/// Throws InvalidInput unless 0 < l <= h, delta0 > 0 and the multiplier
/// interval is nonempty for every budget.
void validate(const DAParams& params, std::span<const double> budgets);

/// Ground truth of one online fair-division problem.
struct MarketInstance {
  Matrix values;                // n x m, v_{i,j}
  std::vector<double> supply;   // s_j, sums to one
  std::vector<double> budgets;  // B_i > 0, sums to one
  NoiseSpec noise;
  DAParams da_params;

  std::size_t num_agents() const { return values.rows(); }
  std::size_t num_types() const { return values.cols(); }
};

/// Checks every MarketInstance invariant; throws InvalidInput naming the
/// first violation.
void validate(const MarketInstance& instance);

/// Uniform supply and equal budgets around a value matrix.
MarketInstance make_instance(Matrix values, NoiseSpec noise = {}, DAParams params = {});

std::vector<double> uniform_weights(std::size_t k);

struct RunConfig {
  std::uint64_t horizon = 0;                  // T
  std::optional<std::uint64_t> t0_override;   // T_0 for DA-EtC
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_stride = 0;        // 0 selects max(1, T/1000)
  std::string policy;
  std::size_t replications = 1;

  std::uint64_t effective_stride() const;
};

void validate(const RunConfig& config);

struct Checkpoint {
  std::uint64_t t = 0;
  double regret = 0.0;
  double nsw = 0.0;
};

struct RunTrace {
  std::vector<Checkpoint> checkpoints;
  std::vector<double> final_cumulative_utilities;
  double final_l2_loss = 0.0;
  double final_rms_loss = 0.0;
  double final_regret = 0.0;
  Matrix per_pair_counts;
  // Checkpoints whose NSW was reported as 0 because some cumulative utility
  // was negative (possible only under gaussian noise).
  std::size_t nsw_clamped_checkpoints = 0;
  std::optional<std::uint64_t> t0;             // DA-EtC
  std::optional<std::uint64_t> restart_count;  // RDA-UCB
};

/// Weighted geometric mean prod_i u_i^{B_i}, accumulated in the log domain.
double nsw(std::span<const double> utilities, std::span<const double> budgets);

/// t * onsw - nsw(U, B). No clamping: lucky paths give negative regret.
double regret_at(std::uint64_t t, double onsw, std::span<const double> cumulative_utilities,
                 std::span<const double> budgets);

/// Euclidean distance between per-round mean utilities and equilibrium utilities.
double l2_utility_loss(std::span<const double> mean_utilities, std::span<const double> eg_utilities);

/// l2_utility_loss / sqrt(n): root-mean-square deviation per agent.
double rms_utility_loss(std::span<const double> mean_utilities, std::span<const double> eg_utilities);

}  // namespace fairdiv
