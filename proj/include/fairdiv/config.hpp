#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairdiv/core.hpp"
#include "fairdiv/policies.hpp"
#include "fairdiv/sim.hpp"

namespace fairdiv {

/// Invalid experiment configuration; the message names the file and key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Dataset { kUniform, kCsv, kJester };

struct ExperimentConfig {
  std::string source;  // file the config came from, for diagnostics
  Dataset dataset = Dataset::kUniform;
  std::size_t n = 0;
  std::size_t m = 0;
  std::string path;
  std::optional<std::uint64_t> horizon;  // "T"
  std::vector<PolicyId> policies;
  std::size_t replications = 20;
  std::uint64_t base_seed = 0;
  NoiseSpec noise;
  DAParams da_params;
  std::optional<std::uint64_t> t0_override;
  std::uint64_t checkpoint_stride = 0;
  SolveOptions solve;
  std::optional<std::vector<double>> budgets;
  std::optional<std::vector<double>> supply;

  /// T, or ConfigError naming the missing key.
  std::uint64_t require_horizon() const;
  RunConfig run_config(PolicyId policy, std::uint64_t seed) const;
};

ExperimentConfig parse_config(const nlohmann::json& doc, const std::string& source = "<config>");
/// Reads a JSON config file. A relative "path" entry resolves against the
/// directory of the config file.
ExperimentConfig load_config(const std::string& path);

/// Builds instances for a config. File-backed datasets are read once, here;
/// the seed drives uniform generation and Jester sub-selection.
InstanceFactory make_instance_factory(const ExperimentConfig& config);

}  // namespace fairdiv
