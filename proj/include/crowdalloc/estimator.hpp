#pragma once

#include "crowdalloc/market.hpp"
#include "crowdalloc/types.hpp"

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace crowdalloc {

/// Robust-UCB parameters for the completion-time and time-to-failure estimators.
struct EstimatorConfig {
  double u_rho = 0.0;   // bound on the raw second moment of a completion-time sample
  double u_beta = 0.0;  // bound on the raw second moment of a surrogate TTF sample
  double alpha = 4.0;   // indices hold with probability >= 1 - t^-alpha
  double delta = 0.5;
  Bounds rho;
  Bounds beta;

  /// Second-moment bounds valid for the configured distributions:
  /// u_rho = rho_max^2 exp(sigma^2), u_beta = 2 (beta_max + delta)^2.
  static EstimatorConfig for_market(const MarketConfig& market);
};

/// Throws InvalidConfig if `cfg` is inconsistent with `market`.
void validate_estimator(const EstimatorConfig& cfg, const MarketConfig& market);

/// Truncated empirical mean: (1/s) sum_k x_k 1{x_k <= sqrt(u k / log(t^alpha))}, k = 1..s in
/// arrival order. Returns `prior` for an empty sample.
double truncated_mean(std::span<const double> samples, double u, long t, double alpha, double prior);

/// 4 sqrt(u alpha log(t) / max(count, 1)).
double confidence_radius(double u, double alpha, long t, std::size_t count);

/// Expected value of delta * N where N ~ Geometric(1 - exp(-delta / beta)) counts windows up to
/// and including the first failure. Tends to beta as delta -> 0.
double surrogate_expectation(double beta, double delta);

/// Truncated mean maintained across a non-decreasing sequence of job indices. Samples only ever
/// leave the truncation set as t grows, so each is removed at most once.
class TruncatedMean {
 public:
  TruncatedMean(double u, double alpha) : u_(u), alpha_(alpha) {}

  void add(double sample);
  double mean(long t, double prior);

  std::span<const double> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }

 private:
  struct Pending {
    double key;  // log t beyond which the sample is truncated
    std::size_t index;
  };
  static bool later(const Pending& a, const Pending& b) { return a.key > b.key; }

  bool truncated(std::size_t index, double log_t_alpha) const;
  void rebuild();

  double u_;
  double alpha_;
  std::vector<double> samples_;
  std::vector<Pending> heap_;
  double included_sum_ = 0.0;
  long last_t_ = 1;
};

struct MeanIndex {
  double hat = 0.0;    // running empirical mean
  double plus = 0.0;   // upper confidence index
  double minus = 0.0;  // lower confidence index
};

/// Per-worker learning state.
class WorkerStats {
 public:
  /// Pessimistic start: rho at (rho_max, rho_max, rho_min), beta at (beta_min, beta_max, beta_min).
  explicit WorkerStats(const EstimatorConfig& cfg);

  MeanIndex rho;
  MeanIndex beta;
  long eta = 0;  // consecutive survived windows since the last failure

  std::span<const double> jct_samples() const { return jct_.samples(); }
  std::span<const double> beta_samples() const { return surrogate_.samples(); }
  std::size_t jct_count() const { return jct_.size(); }
  std::size_t beta_count() const { return surrogate_.size(); }

 private:
  friend void record_jct_sample(WorkerStats&, double, double);
  friend void record_window(WorkerStats&, bool, double);
  friend void refresh_indices(WorkerStats&, long, const EstimatorConfig&);

  TruncatedMean jct_;
  TruncatedMean surrogate_;
};

/// Adds tau / fraction as a completion-time sample and updates the running mean.
void record_jct_sample(WorkerStats& stats, double tau, double fraction);

/// One observed window. On failure, delta * eta becomes a surrogate TTF sample and eta resets.
void record_window(WorkerStats& stats, bool failed, double delta);

/// Recomputes both confidence intervals for job `t`. Without samples the initial indices stay.
void refresh_indices(WorkerStats& stats, long t, const EstimatorConfig& cfg);

/// Sets all indices to known means, collapsing the confidence intervals.
void pin_to_means(WorkerStats& stats, double rho, double beta);

/// min(1, min(D, beta_minus ln(1/(1-eps))) / rho_plus).
double pessimistic_cap(const WorkerStats& stats, double deadline, double epsilon);

void write_estimator_csv(std::ostream& out, std::span<const WorkerStats> stats);

}  // namespace crowdalloc
