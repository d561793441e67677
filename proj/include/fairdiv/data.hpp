#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fairdiv/core.hpp"
#include "fairdiv/sim_state.hpp"

namespace fairdiv {

/// A malformed or unusable data file. The message carries row/column context.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n x m matrix of i.i.d. Uniform[0, 1) values.
Matrix gen_uniform(std::size_t n, std::size_t m, Rng& rng);

/// x -> (x - offset) * scale, as applied by min-max normalization.
struct AffineMap {
  double offset = 0.0;
  double scale = 1.0;
};

struct LoadedValues {
  Matrix values;
  std::optional<AffineMap> normalization;  // set when entries were rescaled
};

/// Rectangular headerless numeric CSV. If any entry falls outside [0, 1]
/// the whole matrix is min-max normalized onto [0, 1].
LoadedValues load_value_csv(const std::string& path);
LoadedValues parse_value_csv(const std::string& text);

inline constexpr double kJesterUnrated = 99.0;
inline constexpr std::size_t kJesterJokes = 100;

/// Jester rows with every joke rated, ratings still on the [-10, 10] scale.
std::vector<std::vector<double>> read_jester_complete_rows(const std::string& path);
std::vector<std::vector<double>> parse_jester_complete_rows(const std::string& text);

/// Samples n_select raters and m_select jokes without replacement and maps
/// each rating r to (r + 10) / 20.
Matrix select_jester(const std::vector<std::vector<double>>& complete_rows, std::size_t n_select,
                     std::size_t m_select, Rng& rng);

Matrix load_jester(const std::string& path, std::size_t n_select, std::size_t m_select, Rng& rng);

/// k distinct indices from [0, population), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t k, Rng& rng);

}  // namespace fairdiv
