#include "crowdalloc/estimator.hpp"

#include "crowdalloc/allocator.hpp"
#include "crowdalloc/csv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace crowdalloc {

namespace {

// sqrt(u k / log(t^alpha)); infinite at t = 1.
double truncation_threshold(double u, std::size_t k, double log_t_alpha) {
  return std::sqrt(u * static_cast<double>(k) / log_t_alpha);
}

}  // namespace

EstimatorConfig EstimatorConfig::for_market(const MarketConfig& market) {
  EstimatorConfig cfg;
  cfg.u_rho = market.rho.hi * market.rho.hi * std::exp(market.sigma_log * market.sigma_log);
  cfg.u_beta = 2.0 * (market.beta.hi + market.delta) * (market.beta.hi + market.delta);
  cfg.alpha = 4.0;
  cfg.delta = market.delta;
  cfg.rho = market.rho;
  cfg.beta = market.beta;
  return cfg;
}

void validate_estimator(const EstimatorConfig& cfg, const MarketConfig& market) {
  const auto fail = [](const std::string& what) { throw InvalidConfig("invalid estimator config: " + what); };
  const double rho_floor = market.rho.hi * market.rho.hi * std::exp(market.sigma_log * market.sigma_log);
  const double beta_floor = 2.0 * (market.beta.hi + market.delta) * (market.beta.hi + market.delta);
  // Relative slack so the defaults pass after a text round trip.
  constexpr double slack = 1.0 - 1e-12;
  if (!(cfg.u_rho >= rho_floor * slack)) {
    fail("u_rho must be at least rho_max^2 exp(sigma_log^2) = " + std::to_string(rho_floor));
  }
  if (!(cfg.u_beta >= beta_floor * slack)) {
    fail("u_beta must be at least 2 (beta_max + delta)^2 = " + std::to_string(beta_floor));
  }
  if (!(cfg.alpha >= 2.0)) {
    fail("alpha must be at least 2");
  }
  if (cfg.delta != market.delta) {
    fail("delta must match the market's delta");
  }
  if (cfg.rho.lo != market.rho.lo || cfg.rho.hi != market.rho.hi || cfg.beta.lo != market.beta.lo ||
      cfg.beta.hi != market.beta.hi) {
    fail("rho/beta bounds must match the market's bounds");
  }
}

double truncated_mean(std::span<const double> samples, double u, long t, double alpha, double prior) {
  if (t < 1) {
    throw std::invalid_argument("truncated_mean: job index must be >= 1");
  }
  if (samples.empty()) {
    return prior;
  }
  const double log_t_alpha = alpha * std::log(static_cast<double>(t));
  double sum = 0.0;
  for (std::size_t k = 1; k <= samples.size(); ++k) {
    const double x = samples[k - 1];
    if (x <= truncation_threshold(u, k, log_t_alpha)) {
      sum += x;
    }
  }
  return sum / static_cast<double>(samples.size());
}

double confidence_radius(double u, double alpha, long t, std::size_t count) {
  const double s = static_cast<double>(std::max<std::size_t>(count, 1));
  return 4.0 * std::sqrt(u * alpha * std::log(static_cast<double>(t)) / s);
}

double surrogate_expectation(double beta, double delta) {
  if (!(beta > 0.0) || !(delta > 0.0)) {
    throw std::invalid_argument("surrogate_expectation: beta and delta must be positive");
  }
  return delta / -std::expm1(-delta / beta);
}

void TruncatedMean::add(double sample) {
  samples_.push_back(sample);
  included_sum_ += sample;
  const double k = static_cast<double>(samples_.size());
  const double key = sample > 0.0 ? u_ * k / (alpha_ * sample * sample) : std::numeric_limits<double>::infinity();
  heap_.push_back({key, samples_.size() - 1});
  std::push_heap(heap_.begin(), heap_.end(), later);
}

bool TruncatedMean::truncated(std::size_t index, double log_t_alpha) const {
  return !(samples_[index] <= truncation_threshold(u_, index + 1, log_t_alpha));
}

void TruncatedMean::rebuild() {
  heap_.clear();
  included_sum_ = 0.0;
  std::vector<double> all;
  all.swap(samples_);
  for (double x : all) {
    add(x);
  }
  last_t_ = 1;
}

double TruncatedMean::mean(long t, double prior) {
  if (t < 1) {
    throw std::invalid_argument("truncated mean: job index must be >= 1");
  }
  if (t < last_t_) {
    rebuild();
  }
  last_t_ = t;
  if (samples_.empty()) {
    return prior;
  }
  const double log_t = std::log(static_cast<double>(t));
  const double log_t_alpha = alpha_ * log_t;
  // Keys are a fast filter; the exact predicate decides. Entries the key admits but the predicate
  // keeps (rounding at the boundary) are set aside so they do not shadow later keys.
  const double reach = log_t * (1.0 + 1e-9);
  std::vector<Pending> kept;
  while (!heap_.empty() && heap_.front().key <= reach) {
    const Pending top = heap_.front();
    std::pop_heap(heap_.begin(), heap_.end(), later);
    heap_.pop_back();
    if (truncated(top.index, log_t_alpha)) {
      included_sum_ -= samples_[top.index];
    } else {
      kept.push_back(top);
    }
  }
  for (const auto& p : kept) {
    heap_.push_back(p);
    std::push_heap(heap_.begin(), heap_.end(), later);
  }
  return included_sum_ / static_cast<double>(samples_.size());
}

WorkerStats::WorkerStats(const EstimatorConfig& cfg)
    : rho{cfg.rho.hi, cfg.rho.hi, cfg.rho.lo},
      beta{cfg.beta.lo, cfg.beta.hi, cfg.beta.lo},
      jct_(cfg.u_rho, cfg.alpha),
      surrogate_(cfg.u_beta, cfg.alpha) {}

void record_jct_sample(WorkerStats& stats, double tau, double fraction) {
  if (!(fraction > 0.0) || !(tau > 0.0)) {
    throw std::invalid_argument("record_jct_sample: tau and fraction must be positive");
  }
  const double sample = tau / fraction;
  stats.jct_.add(sample);
  const double n = static_cast<double>(stats.jct_.size());
  stats.rho.hat = ((n - 1.0) * stats.rho.hat + sample) / n;
}

void record_window(WorkerStats& stats, bool failed, double delta) {
  if (!failed) {
    ++stats.eta;
    return;
  }
  const double sample = delta * static_cast<double>(stats.eta);
  stats.surrogate_.add(sample);
  const double n = static_cast<double>(stats.surrogate_.size());
  stats.beta.hat = ((n - 1.0) * stats.beta.hat + sample) / n;
  stats.eta = 0;
}

void refresh_indices(WorkerStats& stats, long t, const EstimatorConfig& cfg) {
  if (t < 1) {
    throw std::invalid_argument("refresh_indices: job index must be >= 1");
  }
  if (stats.jct_.size() > 0) {
    const double mean = stats.jct_.mean(t, stats.rho.hat);
    const double radius = confidence_radius(cfg.u_rho, cfg.alpha, t, stats.jct_.size());
    stats.rho.plus = cfg.rho.clamp(mean + radius);
    stats.rho.minus = cfg.rho.clamp(mean - radius);
  }
  if (stats.surrogate_.size() > 0) {
    const double mean = stats.surrogate_.mean(t, stats.beta.hat);
    const double radius = confidence_radius(cfg.u_beta, cfg.alpha, t, stats.surrogate_.size());
    stats.beta.plus = cfg.beta.clamp(mean + radius);
    stats.beta.minus = cfg.beta.clamp(mean - radius);
  }
}

void pin_to_means(WorkerStats& stats, double rho, double beta) {
  stats.rho = {rho, rho, rho};
  stats.beta = {beta, beta, beta};
}

double pessimistic_cap(const WorkerStats& stats, double deadline, double epsilon) {
  return cap_from_means(stats.rho.plus, stats.beta.minus, deadline, epsilon);
}

void write_estimator_csv(std::ostream& out, std::span<const WorkerStats> stats) {
  out << "id,N_it,rho_hat,rho_hat_plus,rho_hat_minus,N_beta_it,beta_hat,beta_hat_minus,eta\n";
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    out << i << ',' << s.jct_count() << ',' << format_number(s.rho.hat) << ',' << format_number(s.rho.plus) << ','
        << format_number(s.rho.minus) << ',' << s.beta_count() << ',' << format_number(s.beta.hat) << ','
        << format_number(s.beta.minus) << ',' << s.eta << '\n';
  }
}

}  // namespace crowdalloc
