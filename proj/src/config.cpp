#include "fairdiv/config.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <set>

#include "fairdiv/data.hpp"

namespace fairdiv {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys{
    "dataset", "n",     "m",  "path",   "T",           "policies",  "replications",      "base_seed", "noise",
    "sigma",   "l",     "h",  "delta0", "t0_override", "checkpoint_stride", "gap_tol", "max_iters", "budgets",
    "supply"};

class Reader {
 public:
  Reader(const json& doc, const std::string& source) : doc_(doc), source_(source) {}

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError(source_ + ": key '" + key + "': " + why);
  }

  bool has(const std::string& key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }

  std::uint64_t unsigned_int(const std::string& key, bool positive) const {
    const auto& v = doc_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(key, "expected a nonnegative integer");
    }
    const auto x = v.get<std::uint64_t>();
    if (positive && x == 0) fail(key, "must be positive");
    return x;
  }

  double real(const std::string& key) const {
    const auto& v = doc_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }

  std::string string(const std::string& key) const {
    const auto& v = doc_.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> reals(const std::string& key) const {
    const auto& v = doc_.at(key);
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  const json& raw(const std::string& key) const { return doc_.at(key); }

 private:
  const json& doc_;
  const std::string& source_;
};

}  // namespace

std::uint64_t ExperimentConfig::require_horizon() const {
  if (!horizon) throw ConfigError(source + ": missing required key 'T'");
  return *horizon;
}

RunConfig ExperimentConfig::run_config(PolicyId policy, std::uint64_t seed) const {
  RunConfig cfg;
  cfg.horizon = require_horizon();
  cfg.t0_override = t0_override;
  cfg.seed = seed;
  cfg.checkpoint_stride = checkpoint_stride;
  cfg.policy = std::string(policy_name(policy));
  cfg.replications = replications;
  return cfg;
}

ExperimentConfig parse_config(const json& doc, const std::string& source) {
  if (!doc.is_object()) throw ConfigError(source + ": top level must be a JSON object");
  const Reader in(doc, source);
  for (const auto& [key, _] : doc.items()) {
    if (!kKnownKeys.count(key)) in.fail(key, "unknown key");
  }

  ExperimentConfig cfg;
  cfg.source = source;
  if (!in.has("dataset")) throw ConfigError(source + ": missing required key 'dataset'");
  const auto dataset = in.string("dataset");
  if (dataset == "uniform") {
    cfg.dataset = Dataset::kUniform;
  } else if (dataset == "csv") {
    cfg.dataset = Dataset::kCsv;
  } else if (dataset == "jester") {
    cfg.dataset = Dataset::kJester;
  } else {
    in.fail("dataset", "expected uniform, csv or jester");
  }

  const bool needs_shape = cfg.dataset != Dataset::kCsv;
  for (const char* key : {"n", "m"}) {
    if (in.has(key)) {
      (key[0] == 'n' ? cfg.n : cfg.m) = in.unsigned_int(key, true);
    } else if (needs_shape) {
      throw ConfigError(source + ": missing required key '" + key + "'");
    }
  }
  if (cfg.dataset != Dataset::kUniform) {
    if (!in.has("path")) throw ConfigError(source + ": missing required key 'path'");
    cfg.path = in.string("path");
  }

  if (in.has("T")) cfg.horizon = in.unsigned_int("T", true);
  if (in.has("policies")) {
    const auto& list = in.raw("policies");
    if (!list.is_array() || list.empty()) in.fail("policies", "expected a nonempty array of policy identifiers");
    for (const auto& e : list) {
      const auto id = e.is_string() ? parse_policy(e.get<std::string>()) : std::nullopt;
      if (!id || *id == PolicyId::kDaOracle) {
        in.fail("policies", "unknown policy " + e.dump() + " (valid: random, ucb, da-grdy, da-etc, da-ucb, rda-ucb)");
      }
      cfg.policies.push_back(*id);
    }
  } else {
    cfg.policies.assign(benchmark_policies().begin(), benchmark_policies().end());
  }
  if (in.has("replications")) cfg.replications = in.unsigned_int("replications", true);
  if (in.has("base_seed")) cfg.base_seed = in.unsigned_int("base_seed", false);
  if (in.has("noise")) {
    try {
      cfg.noise.kind = parse_noise_kind(in.string("noise"));
    } catch (const InvalidInput& e) {
      in.fail("noise", e.what());
    }
  }
  if (in.has("sigma")) {
    cfg.noise.sigma = in.real("sigma");
    if (!(cfg.noise.sigma >= 0.0)) in.fail("sigma", "must be nonnegative");
  }
  if (in.has("l")) cfg.da_params.l = in.real("l");
  if (in.has("h")) cfg.da_params.h = in.real("h");
  if (in.has("delta0")) cfg.da_params.delta0 = in.real("delta0");
  if (!(cfg.da_params.l > 0.0)) in.fail("l", "must be positive");
  if (!(cfg.da_params.h >= cfg.da_params.l)) in.fail("h", "must be at least l");
  if (!(cfg.da_params.delta0 > 0.0)) in.fail("delta0", "must be positive");
  if (in.has("t0_override")) {
    cfg.t0_override = in.unsigned_int("t0_override", true);
    if (cfg.horizon && *cfg.t0_override > *cfg.horizon) in.fail("t0_override", "must not exceed T");
  }
  if (in.has("checkpoint_stride")) cfg.checkpoint_stride = in.unsigned_int("checkpoint_stride", true);
  if (in.has("gap_tol")) {
    cfg.solve.gap_tol = in.real("gap_tol");
    if (!(cfg.solve.gap_tol >= 0.0)) in.fail("gap_tol", "must be nonnegative");
  }
  if (in.has("max_iters")) cfg.solve.max_iters = in.unsigned_int("max_iters", true);
  if (in.has("budgets")) cfg.budgets = in.reals("budgets");
  if (in.has("supply")) cfg.supply = in.reals("supply");
  if (cfg.budgets && cfg.n != 0 && cfg.budgets->size() != cfg.n) in.fail("budgets", "length must equal n");
  if (cfg.supply && cfg.m != 0 && cfg.supply->size() != cfg.m) in.fail("supply", "length must equal m");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  auto cfg = parse_config(doc, path);
  // Data paths are relative to the config file, not the working directory.
  if (!cfg.path.empty() && std::filesystem::path(cfg.path).is_relative()) {
    cfg.path = (std::filesystem::path(path).parent_path() / cfg.path).string();
  }
  return cfg;
}

InstanceFactory make_instance_factory(const ExperimentConfig& config) {
  std::function<Matrix(std::uint64_t)> values;
  switch (config.dataset) {
    case Dataset::kUniform:
      values = [n = config.n, m = config.m](std::uint64_t seed) {
        Rng rng(seed);
        return gen_uniform(n, m, rng);
      };
      break;
    case Dataset::kCsv: {
      Matrix loaded;
      try {
        loaded = load_value_csv(config.path).values;
      } catch (const DataError& e) {
        throw ConfigError(config.source + ": key 'path': " + e.what());
      }
      if ((config.n != 0 && loaded.rows() != config.n) || (config.m != 0 && loaded.cols() != config.m)) {
        throw ConfigError(config.source + ": key 'path': matrix shape does not match n/m");
      }
      values = [loaded = std::move(loaded)](std::uint64_t) { return loaded; };
      break;
    }
    case Dataset::kJester: {
      std::shared_ptr<const std::vector<std::vector<double>>> rows;
      try {
        rows = std::make_shared<const std::vector<std::vector<double>>>(read_jester_complete_rows(config.path));
      } catch (const DataError& e) {
        throw ConfigError(config.source + ": key 'path': " + e.what());
      }
      values = [rows, n = config.n, m = config.m](std::uint64_t seed) {
        Rng rng(seed);
        return select_jester(*rows, n, m, rng);
      };
      break;
    }
  }

  // Surface shape and parameter problems now rather than inside a batch.
  MarketInstance probe;
  try {
    probe.values = values(0);
    probe.noise = config.noise;
    probe.da_params = config.da_params;
    probe.budgets = config.budgets.value_or(uniform_weights(probe.values.rows()));
    probe.supply = config.supply.value_or(uniform_weights(probe.values.cols()));
    validate(probe);
  } catch (const DataError& e) {
    throw ConfigError(config.source + ": key 'path': " + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(config.source + ": " + e.what());
  }

  return [values, budgets = probe.budgets, supply = probe.supply, noise = config.noise,
          params = config.da_params](std::uint64_t seed) {
    MarketInstance inst;
    inst.values = values(seed);
    inst.budgets = budgets;
    inst.supply = supply;
    inst.noise = noise;
    inst.da_params = params;
    return inst;
  };
}

}  // namespace fairdiv
