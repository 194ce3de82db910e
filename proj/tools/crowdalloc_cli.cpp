// crowdalloc: run allocation experiments from a key/value config file.
//
//   crowdalloc simulate  --config FILE --out DIR [--replicates N] [--seed S] [--mode M] [--parallelism K]
//   crowdalloc dsic-test --out DIR [--config FILE] [--instances N] [--max-workers N] [--grid N] [--seed S]
//   crowdalloc sweep     --config FILE --out DIR --key KEY --values V1,V2,... [simulate flags]
//
// Exit status: 0 ok, 1 check failed or runtime error, 2 bad arguments, 3 bad config,
// 4 every replicate infeasible.

#include "crowdalloc/config_io.hpp"
#include "crowdalloc/mechanism.hpp"
#include "crowdalloc/simulator.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace crowdalloc;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitBadArgs = 2;
constexpr int kExitBadConfig = 3;
constexpr int kExitInfeasible = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunSpec {
  std::string config_path;
  std::string out_dir;
  int replicates = 1;
  std::optional<std::uint64_t> seed;
  std::string mode = "learning";
  int parallelism = 1;
  bool payments = false;
};

void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw UsageError("cannot create output directory '" + dir.string() + "'");
  }
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) {
      throw UsageError("output directory '" + dir.string() + "' is not writable");
    }
  }
  fs::remove(probe, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) {
    throw std::runtime_error("failed to write '" + path.string() + "'");
  }
}

std::string replicate_tag(int r) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "rep%03d", r);
  return buf;
}

struct ReplicateResult {
  nlohmann::json summary;
  bool infeasible = false;
};

ReplicateResult run_replicate(const ExperimentConfig& base, const RunSpec& spec, Mode mode, std::uint64_t seed,
                              int r, const fs::path& out) {
  ExperimentConfig cfg = base;
  cfg.market.seed = seed;
  const std::string tag = replicate_tag(r);
  ReplicateResult result;
  result.summary["replicate"] = r;
  result.summary["seed"] = seed;

  const auto workers = sample_population(cfg.market, cfg.recipe);
  {
    std::ostringstream pop;
    write_population_csv(pop, workers);
    write_file(out / ("population_" + tag + ".csv"), pop.str());
  }

  RunOptions options;
  options.mode = mode;
  options.keep_records = spec.payments;
  SimulationTrace trace;
  try {
    trace = run(cfg.market, cfg.estimator(), workers, options);
  } catch (const InfeasibleJob& e) {
    result.infeasible = true;
    result.summary["infeasible"] = true;
    result.summary["error"] = e.what();
    return result;
  }

  std::ostringstream csv;
  write_trace_csv(csv, trace);
  write_file(out / ("trace_" + tag + ".csv"), csv.str());

  std::ostringstream est;
  write_estimator_csv(est, trace.final_stats);
  write_file(out / ("estimator_" + tag + ".csv"), est.str());

  if (spec.payments) {
    std::ostringstream pay;
    write_payments_csv(pay, trace);
    write_file(out / ("payments_" + tag + ".csv"), pay.str());
  }

  result.summary.update(summarize(trace));
  result.infeasible = cfg.market.jobs > 0 && trace.completed() == 0;
  result.summary["infeasible"] = result.infeasible;
  return result;
}

/// Runs all replicates of one configuration into `out`. Returns the exit status.
int simulate(const ExperimentConfig& cfg, const RunSpec& spec, const fs::path& out) {
  const Mode mode = parse_mode(spec.mode);
  prepare_out_dir(out);
  const std::uint64_t seed_base = spec.seed.value_or(cfg.market.seed);

  std::vector<ReplicateResult> results(static_cast<std::size_t>(spec.replicates));
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (int r = next++; r < spec.replicates; r = next++) {
      try {
        results[static_cast<std::size_t>(r)] =
            run_replicate(cfg, spec, mode, seed_base + static_cast<std::uint64_t>(r), r, out);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) {
          error = std::current_exception();
        }
      }
    }
  };
  const int threads = std::max(1, std::min(spec.parallelism, spec.replicates));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < threads; ++k) {
      pool.emplace_back(worker);
    }
  }
  if (error) {
    std::rethrow_exception(error);
  }

  nlohmann::json summary;
  summary["mode"] = std::string(to_string(mode));
  summary["seed_base"] = seed_base;
  summary["market"] = to_json(cfg.market);
  summary["estimator"] = to_json(cfg.estimator());
  nlohmann::json aggregate = {{"replicates", spec.replicates},
                              {"replicates_infeasible", 0},
                              {"jobs_completed", 0},
                              {"neg_social_welfare_total", 0.0},
                              {"payment_total", 0.0},
                              {"oracle_cost_total", 0.0},
                              {"regret_total", 0.0}};
  int infeasible = 0;
  for (const auto& res : results) {
    summary["replicate_summaries"].push_back(res.summary);
    if (res.infeasible) {
      ++infeasible;
    }
    if (res.summary.contains("jobs_completed")) {
      aggregate["jobs_completed"] = aggregate["jobs_completed"].get<long>() + res.summary["jobs_completed"].get<long>();
      for (const char* key : {"neg_social_welfare_total", "payment_total", "oracle_cost_total", "regret_total"}) {
        aggregate[key] = aggregate[key].get<double>() + res.summary[key].get<double>();
      }
    }
  }
  aggregate["replicates_infeasible"] = infeasible;
  summary["aggregate"] = aggregate;
  write_file(out / "summary.json", summary.dump(2) + "\n");

  if (infeasible == spec.replicates) {
    std::cerr << "crowdalloc: infeasible instance in all " << spec.replicates << " replicate(s)\n";
    return kExitInfeasible;
  }
  std::cout << "wrote " << spec.replicates << " replicate(s) to " << out.string() << "\n";
  return 0;
}

int sweep(const ExperimentConfig& cfg, const RunSpec& spec, const std::string& key,
          const std::vector<std::string>& values) {
  const fs::path root(spec.out_dir);
  prepare_out_dir(root);
  nlohmann::json index;
  index["key"] = key;
  int worst = 0;
  for (const auto& value : values) {
    ExperimentConfig point = cfg;
    apply_setting(point, key, value);
    // Re-validate: the swept value may break an invariant.
    validate_config(point.market);
    validate_recipe(point.recipe, point.market);
    validate_estimator(point.estimator(), point.market);
    const fs::path dir = root / (key + "=" + value);
    const int status = simulate(point, spec, dir);
    index["points"].push_back({{"value", value}, {"dir", dir.filename().string()}, {"status", status}});
    worst = std::max(worst, status);
  }
  write_file(root / "sweep.json", index.dump(2) + "\n");
  return worst == kExitInfeasible ? kExitInfeasible : 0;
}

int dsic_test(const std::string& config_path, const std::string& out_dir, int instances, int max_workers, int grid,
              std::uint64_t seed) {
  Bounds cost_bounds{10.0, 100.0};
  if (!config_path.empty()) {
    cost_bounds = load_experiment_config(config_path).market.cost;
  }
  if (instances < 1 || max_workers < 1 || grid < 2) {
    throw UsageError("--instances and --max-workers must be >= 1, --grid >= 2");
  }
  const DsicReport report = dsic_check(instances, max_workers, grid, cost_bounds, seed);

  nlohmann::json j = {{"instances", report.instances},
                      {"agents_checked", report.agents_checked},
                      {"bids_evaluated", report.bids_evaluated},
                      {"max_gain", report.max_gain},
                      {"tolerance", kDsicTolerance},
                      {"min_truthful_utility", report.min_truthful_utility},
                      {"passed", report.passed()}};
  if (!out_dir.empty()) {
    prepare_out_dir(out_dir);
    write_file(fs::path(out_dir) / "dsic.json", j.dump(2) + "\n");
  }
  std::cout << "dsic-test: " << report.instances << " instances, " << report.agents_checked
            << " agents, max utility gain " << report.max_gain << (report.passed() ? " (ok)" : " (VIOLATION)")
            << "\n";
  return report.passed() ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truthful online job allocation with learned completion and failure times"};
  app.require_subcommand(1);

  RunSpec spec;
  auto add_run_flags = [&spec](CLI::App* cmd) {
    cmd->add_option("--config", spec.config_path, "Experiment config file")->required();
    cmd->add_option("--out", spec.out_dir, "Output directory")->required();
    cmd->add_option("--replicates", spec.replicates, "Number of seeded replicates")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", spec.seed, "Seed base (defaults to the config's seed)");
    cmd->add_option("--mode", spec.mode, "learning or known-means")
        ->check(CLI::IsMember({"learning", "known-means"}));
    cmd->add_option("--parallelism", spec.parallelism, "Replicates run concurrently")->check(CLI::PositiveNumber);
    cmd->add_flag("--payments", spec.payments, "Also write per-job payment rows");
  };

  auto* simulate_cmd = app.add_subcommand("simulate", "Run replicates of one configuration");
  add_run_flags(simulate_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run one configuration per value of a config key");
  add_run_flags(sweep_cmd);
  std::string sweep_key;
  std::vector<std::string> sweep_values;
  sweep_cmd->add_option("--key", sweep_key, "Config key to vary")->required();
  sweep_cmd->add_option("--values", sweep_values, "Values to try")->required()->delimiter(',');

  auto* dsic_cmd = app.add_subcommand("dsic-test", "Search random instances for profitable misreports");
  std::string dsic_config;
  std::string dsic_out;
  int instances = 200;
  int max_workers = 8;
  int grid = 50;
  std::uint64_t dsic_seed = 1;
  dsic_cmd->add_option("--config", dsic_config, "Config file supplying the cost bounds");
  dsic_cmd->add_option("--out", dsic_out, "Output directory for dsic.json");
  dsic_cmd->add_option("--instances", instances, "Random instances to test");
  dsic_cmd->add_option("--max-workers", max_workers, "Largest instance size");
  dsic_cmd->add_option("--grid", grid, "Evenly spaced deviation bids per agent");
  dsic_cmd->add_option("--seed", dsic_seed, "Instance generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadArgs;
  }

  try {
    if (*dsic_cmd) {
      return dsic_test(dsic_config, dsic_out, instances, max_workers, grid, dsic_seed);
    }
    const ExperimentConfig cfg = load_experiment_config(spec.config_path);
    if (*simulate_cmd) {
      return simulate(cfg, spec, spec.out_dir);
    }
    return sweep(cfg, spec, sweep_key, sweep_values);
  } catch (const UsageError& e) {
    std::cerr << "crowdalloc: " << e.what() << "\n";
    return kExitBadArgs;
  } catch (const InvalidConfig& e) {
    std::cerr << "crowdalloc: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const InvalidRecipe& e) {
    std::cerr << "crowdalloc: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "crowdalloc: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}
