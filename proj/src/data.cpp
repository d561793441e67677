#include "fairdiv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>

namespace fairdiv {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits text into rows of numeric cells; blank lines are skipped. Row and
// column numbers in diagnostics are 1-based.
std::vector<std::vector<double>> parse_numeric_rows(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell = trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
      ++col;
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        std::ostringstream msg;
        msg << "line " << line_no << ", column " << col << ": '" << cell << "' is not a number";
        throw DataError(msg.str());
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Matrix gen_uniform(std::size_t n, std::size_t m, Rng& rng) {
  Matrix out(n, m);
  for (auto& v : out.data()) v = uniform01(rng);
  return out;
}

LoadedValues parse_value_csv(const std::string& text) {
  const auto rows = parse_numeric_rows(text);
  if (rows.empty()) throw DataError("value file is empty");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) {
      std::ostringstream msg;
      msg << "row " << r + 1 << " has " << rows[r].size() << " columns, expected " << rows.front().size();
      throw DataError(msg.str());
    }
  }
  LoadedValues out{Matrix::from_rows(rows), std::nullopt};
  const auto data = out.values.data();
  const auto [lo_it, hi_it] = std::minmax_element(data.begin(), data.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (lo >= 0.0 && hi <= 1.0) return out;
  AffineMap map{lo, hi > lo ? 1.0 / (hi - lo) : 0.0};
  for (auto& v : out.values.data()) v = std::clamp((v - map.offset) * map.scale, 0.0, 1.0);
  out.normalization = map;
  return out;
}

LoadedValues load_value_csv(const std::string& path) {
  try {
    return parse_value_csv(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<std::vector<double>> parse_jester_complete_rows(const std::string& text) {
  const auto rows = parse_numeric_rows(text);
  std::vector<std::vector<double>> complete;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != kJesterJokes + 1) {
      std::ostringstream msg;
      msg << "row " << r + 1 << " has " << rows[r].size() << " columns, expected " << kJesterJokes + 1
          << " (count followed by ratings)";
      throw DataError(msg.str());
    }
    std::vector<double> ratings(rows[r].begin() + 1, rows[r].end());
    bool all_rated = true;
    for (std::size_t c = 0; c < ratings.size(); ++c) {
      if (ratings[c] == kJesterUnrated) {
        all_rated = false;
        continue;
      }
      if (ratings[c] < -10.0 || ratings[c] > 10.0) {
        std::ostringstream msg;
        msg << "row " << r + 1 << ", column " << c + 2 << ": rating " << ratings[c] << " outside [-10, 10]";
        throw DataError(msg.str());
      }
    }
    if (all_rated) complete.push_back(std::move(ratings));
  }
  return complete;
}

std::vector<std::vector<double>> read_jester_complete_rows(const std::string& path) {
  try {
    return parse_jester_complete_rows(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t k, Rng& rng) {
  if (k > population) throw InvalidInput("cannot sample more items than the population holds");
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates.
  for (std::size_t a = 0; a < k; ++a) {
    const auto b = std::uniform_int_distribution<std::size_t>(a, population - 1)(rng);
    std::swap(pool[a], pool[b]);
  }
  pool.resize(k);
  return pool;
}

Matrix select_jester(const std::vector<std::vector<double>>& complete_rows, std::size_t n_select,
                     std::size_t m_select, Rng& rng) {
  if (complete_rows.size() < n_select) {
    std::ostringstream msg;
    msg << "only " << complete_rows.size() << " raters rated every joke, " << n_select << " requested";
    throw DataError(msg.str());
  }
  if (m_select > kJesterJokes) throw DataError("cannot select more than 100 jokes");
  const auto raters = sample_without_replacement(complete_rows.size(), n_select, rng);
  const auto jokes = sample_without_replacement(kJesterJokes, m_select, rng);
  Matrix out(n_select, m_select);
  for (std::size_t i = 0; i < n_select; ++i) {
    for (std::size_t j = 0; j < m_select; ++j) out(i, j) = (complete_rows[raters[i]][jokes[j]] + 10.0) / 20.0;
  }
  return out;
}

Matrix load_jester(const std::string& path, std::size_t n_select, std::size_t m_select, Rng& rng) {
  return select_jester(read_jester_complete_rows(path), n_select, m_select, rng);
}

}  // namespace fairdiv
