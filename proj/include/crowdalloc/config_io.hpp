#pragma once

#include "crowdalloc/estimator.hpp"
#include "crowdalloc/market.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace crowdalloc {

/// Everything an experiment file describes.
struct ExperimentConfig {
  MarketConfig market;
  PopulationRecipe recipe;
  std::optional<double> u_rho;
  std::optional<double> u_beta;
  double alpha = 4.0;

  /// Estimator defaults for the market, overridden by any bounds given in the file.
  EstimatorConfig estimator() const;
};

/// Parses `key = value` lines. `#` starts a comment. Recognized keys:
///
///   workers, jobs, deadline, epsilon, delta, sigma_log, seed,
///   cost_min, cost_max, rho_min, rho_max, beta_min, beta_max,
///   u_rho, u_beta, alpha,
///   group = COUNT, COST, RHO, BETA   (each range either `lo:hi` or a single value; repeatable)
///
/// Without any group line the population is one group spanning the configured bounds. Throws
/// InvalidConfig on malformed input and unknown keys; the result is validated.
ExperimentConfig parse_experiment_config(std::istream& in, std::string_view source = "<input>");

/// Throws InvalidConfig naming `path` when the file cannot be read.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment.
void apply_setting(ExperimentConfig& cfg, std::string_view key, std::string_view value);

void write_population_csv(std::ostream& out, std::span<const WorkerProfile> workers);

nlohmann::json to_json(const MarketConfig& market);
nlohmann::json to_json(const EstimatorConfig& estimator);

}  // namespace crowdalloc
