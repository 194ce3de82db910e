#pragma once

#include "crowdalloc/allocator.hpp"
#include "crowdalloc/estimator.hpp"
#include "crowdalloc/market.hpp"
#include "crowdalloc/mechanism.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace crowdalloc {

enum class Mode {
  Learning,    // confidence indices learned from observed outcomes
  KnownMeans,  // indices pinned to the true means
};

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

struct JobRecord {
  long job = 0;
  JobOutcome outcome;
  Allocation allocation;
  VectorXd caps;
  PaymentRecord settlement;
  bool optimal_set = false;
};

/// Running totals after one completed job.
struct TracePoint {
  long job = 0;
  double neg_social_welfare_cum = 0.0;  // sum of c_i x_i at true costs
  double payment_cum = 0.0;
  double oracle_cost_cum = 0.0;
  double oracle_payment_cum = 0.0;
  Index active_set_size = 0;
  bool optimal_set_match = false;
  double regret_cum = 0.0;
  double regret_avg = 0.0;
};

struct SimulationTrace {
  std::vector<JobRecord> records;  // only filled when RunOptions::keep_records is set
  std::vector<TracePoint> series;
  std::vector<long> infeasible_jobs;

  VectorXd costs;  // true costs
  Allocation oracle;
  double oracle_cost = 0.0;     // per job
  double oracle_payment = 0.0;  // per job, payment rule applied to the oracle allocation
  bool truthful = true;
  double min_truthful_utility = 0.0;  // over all completed jobs; 0 when none

  std::vector<WorkerStats> final_stats;

  long completed() const { return static_cast<long>(series.size()); }
};

struct RunOptions {
  Mode mode = Mode::Learning;
  bool keep_records = true;
  std::optional<BidProfile> bids;  // truthful when unset
};

/// The online job loop. Each call to step() processes the next job.
class Simulation {
 public:
  /// Throws InfeasibleJob if even the oracle cannot cover a job.
  Simulation(const MarketConfig& market, const EstimatorConfig& estimator, std::vector<WorkerProfile> workers,
             RunOptions options = {});

  long next_job() const { return next_job_; }
  bool done() const { return next_job_ > market_.jobs; }

  /// Processes job next_job(). Returns nothing when the job was infeasible.
  std::optional<JobRecord> step();

  std::span<const WorkerStats> stats() const { return stats_; }
  std::span<const WorkerProfile> workers() const { return workers_; }
  const VectorXd& bids() const { return bids_; }
  const SimulationTrace& trace() const { return trace_; }

  SimulationTrace finish() &&;

 private:
  MarketConfig market_;
  EstimatorConfig estimator_;
  std::vector<WorkerProfile> workers_;
  RunOptions options_;
  VectorXd bids_;
  std::vector<WorkerStats> stats_;
  WorkerStreams streams_;
  std::vector<Index> oracle_active_;
  SimulationTrace trace_;
  long next_job_ = 1;
};

SimulationTrace run(const MarketConfig& market, const EstimatorConfig& estimator,
                    std::span<const WorkerProfile> workers, RunOptions options = {});

/// Samples the population from `recipe` with market.seed, then runs.
SimulationTrace run(const MarketConfig& market, const EstimatorConfig& estimator, const PopulationRecipe& recipe,
                    RunOptions options = {});

struct RegretSeries {
  double total = 0.0;
  std::vector<double> cumulative;
  std::vector<double> average;  // cumulative / jobs so far
};

/// sum_t sum_i c_i (x_i(t) - x_i*): incurred minus optimal cost.
RegretSeries regret(std::span<const VectorXd> allocations, const VectorXd& oracle_fractions, const VectorXd& costs);
RegretSeries regret(const SimulationTrace& trace);

struct SetMatch {
  std::vector<bool> flags;         // active set equals the oracle's, per completed job
  std::optional<long> first_match;  // first job of the final all-true run
};

/// Recomputed from the stored allocations when available, from the series otherwise.
SetMatch optimal_set_match(const SimulationTrace& trace);

/// First job of the trailing run of true flags.
std::optional<long> first_stable_match(const std::vector<bool>& flags, std::span<const long> jobs);

void write_trace_csv(std::ostream& out, const SimulationTrace& trace);
void write_payments_csv(std::ostream& out, const SimulationTrace& trace);

nlohmann::json summarize(const SimulationTrace& trace);

}  // namespace crowdalloc
