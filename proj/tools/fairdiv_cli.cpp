// fairdiv: solve an equilibrium, run one episode, or run the benchmark matrix.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fairdiv/config.hpp"
#include "fairdiv/data.hpp"
#include "fairdiv/eg_solver.hpp"
#include "fairdiv/policies.hpp"
#include "fairdiv/sim.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fairdiv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitPolicy = 4;

struct Options {
  std::string config;
  std::string out = ".";
  std::string policy;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  unsigned threads = 0;
  bool gnuplot = false;
};

std::string valid_policy_list() {
  std::string out;
  for (auto id : benchmark_policies()) {
    if (!out.empty()) out += ", ";
    out += policy_name(id);
  }
  return out;
}

PolicyId require_policy(const std::string& name) {
  const auto id = parse_policy(name);
  if (!id || *id == PolicyId::kDaOracle) {
    throw ConfigError("unknown policy '" + name + "'; valid identifiers: " + valid_policy_list());
  }
  return *id;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

ExperimentConfig load(const Options& opt) {
  auto cfg = load_config(opt.config);
  if (opt.seed) cfg.base_seed = *opt.seed;
  if (opt.replications) {
    if (*opt.replications == 0) throw ConfigError("--replications must be at least 1");
    cfg.replications = *opt.replications;
  }
  return cfg;
}

// The guarantee for explore-then-commit assumes 2l <= v <= h/2; it is only advisory.
void warn_theory_range(const MarketInstance& inst) {
  const auto& p = inst.da_params;
  for (double v : inst.values.data()) {
    if (v < 2.0 * p.l || v > p.h / 2.0) {
      std::cerr << "warning: da-etc analysis assumes values in [2l, h/2] = [" << 2.0 * p.l << ", " << p.h / 2.0
                << "]; some values fall outside\n";
      return;
    }
  }
}

json solution_json(const EGSolution& sol) {
  json doc;
  doc["onsw"] = sol.onsw;
  doc["utilities"] = sol.utilities;
  doc["prices"] = sol.prices;
  doc["multipliers"] = sol.multipliers;
  doc["duality_gap"] = sol.duality_gap;
  doc["iterations"] = sol.iterations;
  json rows = json::array();
  for (std::size_t i = 0; i < sol.allocation.rows(); ++i) {
    auto r = sol.allocation.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  doc["allocation"] = rows;
  return doc;
}

int cmd_solve(const Options& opt) {
  const auto cfg = load(opt);
  const auto inst = make_instance_factory(cfg)(mix_seed(cfg.base_seed, kInstanceStream, 0));
  const auto dir = prepare_out_dir(opt.out);
  try {
    const auto sol = solve_eg(inst, cfg.solve);
    auto doc = solution_json(sol);
    doc["converged"] = true;
    write_json(dir / "solution.json", doc);
    std::cout << "duality_gap " << sol.duality_gap << " after " << sol.iterations << " iterations\n";
    return kExitOk;
  } catch (const SolverNotConverged& e) {
    auto doc = solution_json(e.best());
    doc["converged"] = false;
    write_json(dir / "solution.json", doc);
    std::cerr << "error: " << e.what() << "; best duality_gap " << e.best().duality_gap << " (gap_tol "
              << cfg.solve.gap_tol << ")\n";
    return kExitNumerical;
  }
}

int cmd_run(const Options& opt) {
  const auto policy = require_policy(opt.policy);
  const auto cfg = load(opt);
  const std::uint64_t seed = cfg.base_seed;
  const auto inst = make_instance_factory(cfg)(mix_seed(seed, kInstanceStream, 0));
  const auto eg = solve_eg(inst, cfg.solve);
  if (policy == PolicyId::kDaEtc) warn_theory_range(inst);

  // Same episode as replication 0 of a batch with this base seed.
  auto rc = cfg.run_config(policy, mix_seed(seed, policy_index(policy), 0));
  const auto trace = run_episode(inst, policy, rc, eg);

  const auto dir = prepare_out_dir(opt.out);
  const std::string stem = std::string(policy_name(policy)) + "_" + std::to_string(seed);
  {
    auto out = open_output(dir / (stem + "_trace.csv"));
    write_trace_csv(out, trace);
  }
  json doc;
  doc["policy"] = policy_name(policy);
  doc["seed"] = seed;
  doc["T"] = rc.horizon;
  doc["n"] = inst.num_agents();
  doc["m"] = inst.num_types();
  doc["onsw"] = eg.onsw;
  doc["final_regret"] = trace.final_regret;
  doc["l2_loss"] = trace.final_l2_loss;
  doc["rms_loss"] = trace.final_rms_loss;
  doc["final_cumulative_utilities"] = trace.final_cumulative_utilities;
  doc["eg_utilities"] = eg.utilities;
  doc["nsw_clamped_checkpoints"] = trace.nsw_clamped_checkpoints;
  if (trace.t0) doc["t0"] = *trace.t0;
  if (trace.restart_count) doc["restart_count"] = *trace.restart_count;
  write_json(dir / (stem + "_summary.json"), doc);
  return kExitOk;
}

std::string fmt(double x, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

void write_loss_tables(const fs::path& dir, const BatchResult& result) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < result.summaries.size(); ++k) {
    if (result.summaries[k].mean_l2_loss < result.summaries[best].mean_l2_loss) best = k;
  }
  auto md = open_output(dir / "loss_table.md");
  md << "| Policy | Mean l2 loss | Std. err. | Per-agent RMS loss |\n";
  md << "|---|---|---|---|\n";
  auto csv = open_output(dir / "loss_table.csv");
  csv << "policy,mean_l2_loss,stderr_l2_loss,mean_rms_loss,stderr_rms_loss\n";
  for (std::size_t k = 0; k < result.summaries.size(); ++k) {
    const auto& s = result.summaries[k];
    std::string loss = fmt(s.mean_l2_loss, "%.4f");
    if (k == best) loss = "**" + loss + "**";
    md << "| " << policy_name(s.policy) << " | " << loss << " | " << fmt(s.stderr_l2_loss, "%.4f") << " | "
       << fmt(s.mean_rms_loss, "%.4f") << " |\n";
    csv << policy_name(s.policy) << ',' << fmt(s.mean_l2_loss, "%.17g") << ',' << fmt(s.stderr_l2_loss, "%.17g")
        << ',' << fmt(s.mean_rms_loss, "%.17g") << ',' << fmt(s.stderr_rms_loss, "%.17g") << '\n';
  }
}

void write_gnuplot(const fs::path& dir, const BatchResult& result) {
  auto gp = open_output(dir / "regret.gp");
  gp << "set datafile separator ','\n"
        "set xlabel 't'\n"
        "set ylabel 'regret'\n"
        "set key left top\n"
        "set terminal pngcairo size 900,600\n"
        "set output 'regret.png'\n"
        "plot";
  for (std::size_t k = 0; k < result.summaries.size(); ++k) {
    const std::string name(policy_name(result.summaries[k].policy));
    gp << (k ? ", \\\n    " : " ") << "'" << name << "_aggregate.csv' every ::1 using 1:2 with lines title '" << name
       << "'";
  }
  gp << '\n';
}

int cmd_bench(const Options& opt) {
  const auto cfg = load(opt);
  BatchSpec spec;
  spec.make_instance = make_instance_factory(cfg);
  spec.policies = cfg.policies;
  spec.config = cfg.run_config(PolicyId::kRandom, cfg.base_seed);
  spec.config.replications = cfg.replications;
  spec.solve = cfg.solve;
  spec.threads = opt.threads;
  for (auto p : spec.policies) {
    if (p == PolicyId::kDaEtc) warn_theory_range(spec.make_instance(mix_seed(cfg.base_seed, kInstanceStream, 0)));
  }

  const auto result = run_batch(spec);
  const auto dir = prepare_out_dir(opt.out);
  json table = json::array();
  for (const auto& s : result.summaries) {
    const std::string name(policy_name(s.policy));
    {
      auto out = open_output(dir / (name + "_aggregate.csv"));
      write_aggregate_csv(out, s);
    }
    json row;
    row["policy"] = name;
    row["mean_final_regret"] = s.mean_final_regret;
    row["stderr_final_regret"] = s.stderr_final_regret;
    row["mean_l2_loss"] = s.mean_l2_loss;
    row["stderr_l2_loss"] = s.stderr_l2_loss;
    row["mean_rms_loss"] = s.mean_rms_loss;
    row["stderr_rms_loss"] = s.stderr_rms_loss;
    row["replications"] = s.replications;
    row["T"] = s.horizon;
    row["onsw"] = s.mean_onsw;
    table.push_back(row);
  }
  write_json(dir / "summary.json", table);
  write_loss_tables(dir, result);
  if (opt.gnuplot) write_gnuplot(dir, result);
  return kExitOk;
}

int exit_code_for(std::exception_ptr error) {
  try {
    std::rethrow_exception(error);
  } catch (const BatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.stage() == BatchError::Stage::kEpisode) return kExitPolicy;
    if (!e.cause()) return kExitOther;
    try {
      std::rethrow_exception(e.cause());
    } catch (const SolverNotConverged&) {
      return kExitNumerical;
    } catch (const std::invalid_argument&) {
      return kExitConfig;
    } catch (const ConfigError&) {
      return kExitConfig;
    } catch (const DataError&) {
      return kExitConfig;
    } catch (...) {
      return kExitOther;
    }
  } catch (const SolverNotConverged& e) {
    std::cerr << "error: " << e.what() << "; best duality_gap " << e.best().duality_gap << '\n';
    return kExitNumerical;
  } catch (const PolicyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPolicy;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
  return kExitOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online fair division under bandit feedback"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Experiment config (JSON)")->required();
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", opt.seed, "Base seed (overrides base_seed)");
  };

  auto* solve = app.add_subcommand("solve", "Solve the equilibrium of the configured instance");
  add_common(solve);

  auto* run = app.add_subcommand("run", "Run one episode of one policy");
  add_common(run);
  run->add_option("--policy", opt.policy, "Policy identifier")->required();

  auto* bench = app.add_subcommand("bench", "Run every configured policy over all replications");
  add_common(bench);
  bench->add_option("--replications", opt.replications, "Replications (overrides config)");
  bench->add_option("--threads", opt.threads, "Worker threads (0: all cores)");
  bench->add_flag("--gnuplot", opt.gnuplot, "Also write regret.gp");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*solve) return cmd_solve(opt);
    if (*run) return cmd_run(opt);
    return cmd_bench(opt);
  } catch (...) {
    return exit_code_for(std::current_exception());
  }
}
