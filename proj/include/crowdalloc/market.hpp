#pragma once

#include "crowdalloc/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace crowdalloc {

/// Problem instance parameters shared by every job of a run.
struct MarketConfig {
  Index workers = 0;
  long jobs = 0;
  double deadline = 50.0;
  double epsilon = 0.01;  // failure-probability threshold per task
  double delta = 0.5;     // length of the failure observation window
  Bounds cost{10.0, 100.0};
  Bounds rho{50.0, 100.0};   // mean job completion time
  Bounds beta{25.0, 35.0};   // mean time to failure
  double sigma_log = 0.25;   // log-scale shape of the completion-time law
  std::uint64_t seed = 0;

  /// ln(1 / (1 - epsilon)): converts a mean TTF into the longest admissible working time.
  double failure_log_factor() const { return -std::log1p(-epsilon); }
};

/// Returns `cfg` unchanged when every invariant holds, throws InvalidConfig otherwise.
MarketConfig validate_config(MarketConfig cfg);

struct WorkerProfile {
  Index id = 0;
  double cost = 0.0;
  double mjct = 0.0;
  double mttf = 0.0;
};

/// Announced costs, one per worker, in worker-id order.
struct BidProfile {
  VectorXd bids;

  static BidProfile truthful(std::span<const WorkerProfile> workers);
};

/// Throws InvalidConfig when the profile does not fit `cfg`.
void validate_bids(const BidProfile& profile, const MarketConfig& cfg);

VectorXd costs_of(std::span<const WorkerProfile> workers);

struct WorkerGroup {
  Index count = 0;
  Bounds cost;
  Bounds rho;
  Bounds beta;
};

struct PopulationRecipe {
  std::vector<WorkerGroup> groups;

  Index size() const;

  /// `good` high-performing workers and `mediocre` slow, failure-prone, expensive ones.
  static PopulationRecipe high_and_mediocre(Index good, Index mediocre);
};

/// Throws InvalidRecipe unless the groups partition the workers with ranges inside the bounds.
void validate_recipe(const PopulationRecipe& recipe, const MarketConfig& cfg);

/// Draws each worker's parameters uniformly from its group's ranges. Deterministic in cfg.seed.
std::vector<WorkerProfile> sample_population(const MarketConfig& cfg, const PopulationRecipe& recipe);

enum class Window {
  NotObserved,  // the task ended before a full window elapsed
  Survived,
  Failed,
};

struct OutcomeDraw {
  double completion_time = 0.0;
  Window window = Window::NotObserved;
};

/// Completion time of `fraction` of a job and the failure status of its first observation window.
OutcomeDraw sample_outcome(const WorkerProfile& worker, double fraction, const MarketConfig& cfg,
                           std::mt19937_64& rng);

/// One RNG stream per worker, all derived from a master seed.
class WorkerStreams {
 public:
  WorkerStreams(std::uint64_t master_seed, Index workers);

  std::mt19937_64& operator[](Index worker) { return streams_[static_cast<std::size_t>(worker)]; }
  Index size() const { return static_cast<Index>(streams_.size()); }

 private:
  std::vector<std::mt19937_64> streams_;
};

/// Realized performance of one job. Entries of unallocated workers are zero / NotObserved.
struct JobOutcome {
  long job = 0;
  VectorXd fractions;
  VectorXd completion_times;
  std::vector<Window> windows;
};

}  // namespace crowdalloc
