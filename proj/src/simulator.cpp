#include "crowdalloc/simulator.hpp"

#include "crowdalloc/csv.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

namespace crowdalloc {

std::string_view to_string(Mode mode) {
  return mode == Mode::Learning ? "learning" : "known-means";
}

Mode parse_mode(std::string_view text) {
  if (text == "learning") {
    return Mode::Learning;
  }
  if (text == "known-means") {
    return Mode::KnownMeans;
  }
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected learning or known-means)");
}

Simulation::Simulation(const MarketConfig& market, const EstimatorConfig& estimator, std::vector<WorkerProfile> workers,
                       RunOptions options)
    : market_(validate_config(market)),
      estimator_(estimator),
      workers_(std::move(workers)),
      options_(std::move(options)),
      streams_(market.seed, market.workers) {
  validate_estimator(estimator_, market_);
  if (static_cast<Index>(workers_.size()) != market_.workers) {
    throw InvalidConfig("invalid config: population size differs from the worker count");
  }
  trace_.costs = costs_of(workers_);
  if (options_.bids) {
    validate_bids(*options_.bids, market_);
    bids_ = options_.bids->bids;
  } else {
    bids_ = trace_.costs;
  }
  trace_.truthful = bids_ == trace_.costs;

  stats_.reserve(workers_.size());
  for (const auto& w : workers_) {
    stats_.emplace_back(estimator_);
    if (options_.mode == Mode::KnownMeans) {
      pin_to_means(stats_.back(), w.mjct, w.mttf);
    }
  }

  const VectorXd caps = true_caps(workers_, market_.deadline, market_.epsilon);
  trace_.oracle = sw_greedy(trace_.costs, caps);
  trace_.oracle_cost = trace_.oracle.cost(trace_.costs);
  trace_.oracle_payment = settle(0, trace_.oracle, caps, trace_.costs, trace_.costs, market_.cost.hi).payments.sum();
  oracle_active_ = active_set(trace_.oracle);
}

std::optional<JobRecord> Simulation::step() {
  if (done()) {
    throw std::logic_error("Simulation::step: all jobs already processed");
  }
  const long t = next_job_++;
  const Index n = market_.workers;
  const bool learning = options_.mode == Mode::Learning;

  VectorXd caps(n);
  for (Index i = 0; i < n; ++i) {
    auto& s = stats_[static_cast<std::size_t>(i)];
    if (learning) {
      refresh_indices(s, t, estimator_);
    }
    caps[i] = pessimistic_cap(s, market_.deadline, market_.epsilon);
  }

  JobRecord record;
  record.job = t;
  try {
    record.allocation = sw_greedy(bids_, caps);
  } catch (const InfeasibleJob&) {
    trace_.infeasible_jobs.push_back(t);
    return std::nullopt;
  }
  const Allocation& alloc = record.allocation;

  record.outcome.job = t;
  record.outcome.fractions = alloc.fractions;
  record.outcome.completion_times = VectorXd::Zero(n);
  record.outcome.windows.assign(static_cast<std::size_t>(n), Window::NotObserved);
  for (Index i = 0; i < n; ++i) {
    const double x = alloc.fractions[i];
    if (x <= 0.0) {
      continue;
    }
    const auto draw = sample_outcome(workers_[static_cast<std::size_t>(i)], x, market_, streams_[i]);
    record.outcome.completion_times[i] = draw.completion_time;
    record.outcome.windows[static_cast<std::size_t>(i)] = draw.window;
    if (learning) {
      auto& s = stats_[static_cast<std::size_t>(i)];
      record_jct_sample(s, draw.completion_time, x);
      if (draw.window != Window::NotObserved) {
        record_window(s, draw.window == Window::Failed, market_.delta);
      }
    }
  }

  record.settlement = settle(t, alloc, caps, bids_, trace_.costs, market_.cost.hi);
  record.caps = std::move(caps);
  record.optimal_set = active_set(alloc) == oracle_active_;

  const TracePoint prev = trace_.series.empty() ? TracePoint{} : trace_.series.back();
  TracePoint point;
  point.job = t;
  const double cost = alloc.cost(trace_.costs);
  point.neg_social_welfare_cum = prev.neg_social_welfare_cum + cost;
  point.payment_cum = prev.payment_cum + record.settlement.payments.sum();
  point.oracle_cost_cum = prev.oracle_cost_cum + trace_.oracle_cost;
  point.oracle_payment_cum = prev.oracle_payment_cum + trace_.oracle_payment;
  point.active_set_size = alloc.active_count();
  point.optimal_set_match = record.optimal_set;
  point.regret_cum = prev.regret_cum + (cost - trace_.oracle_cost);
  point.regret_avg = point.regret_cum / static_cast<double>(trace_.series.size() + 1);

  if (trace_.truthful) {
    const double lowest = record.settlement.utilities.minCoeff();
    trace_.min_truthful_utility = trace_.series.empty() ? lowest : std::min(trace_.min_truthful_utility, lowest);
  }
  trace_.series.push_back(point);
  if (options_.keep_records) {
    trace_.records.push_back(record);
  }
  return record;
}

SimulationTrace Simulation::finish() && {
  while (!done()) {
    step();
  }
  trace_.final_stats = std::move(stats_);
  return std::move(trace_);
}

SimulationTrace run(const MarketConfig& market, const EstimatorConfig& estimator,
                    std::span<const WorkerProfile> workers, RunOptions options) {
  Simulation sim(market, estimator, std::vector<WorkerProfile>(workers.begin(), workers.end()), std::move(options));
  return std::move(sim).finish();
}

SimulationTrace run(const MarketConfig& market, const EstimatorConfig& estimator, const PopulationRecipe& recipe,
                    RunOptions options) {
  const auto workers = sample_population(validate_config(market), recipe);
  return run(market, estimator, workers, std::move(options));
}

RegretSeries regret(std::span<const VectorXd> allocations, const VectorXd& oracle_fractions, const VectorXd& costs) {
  RegretSeries out;
  out.cumulative.reserve(allocations.size());
  out.average.reserve(allocations.size());
  const double optimal = oracle_fractions.dot(costs);
  for (const auto& x : allocations) {
    out.total += x.dot(costs) - optimal;
    out.cumulative.push_back(out.total);
    out.average.push_back(out.total / static_cast<double>(out.cumulative.size()));
  }
  return out;
}

RegretSeries regret(const SimulationTrace& trace) {
  if (trace.records.empty() && !trace.series.empty()) {
    throw std::invalid_argument("regret: trace was recorded without per-job allocations");
  }
  std::vector<VectorXd> allocations;
  allocations.reserve(trace.records.size());
  for (const auto& r : trace.records) {
    allocations.push_back(r.allocation.fractions);
  }
  return regret(allocations, trace.oracle.fractions, trace.costs);
}

std::optional<long> first_stable_match(const std::vector<bool>& flags, std::span<const long> jobs) {
  if (flags.empty() || !flags.back()) {
    return std::nullopt;
  }
  std::size_t k = flags.size();
  while (k > 0 && flags[k - 1]) {
    --k;
  }
  return jobs[k];
}

SetMatch optimal_set_match(const SimulationTrace& trace) {
  SetMatch out;
  std::vector<long> jobs;
  if (!trace.records.empty()) {
    const auto oracle = active_set(trace.oracle);
    for (const auto& r : trace.records) {
      out.flags.push_back(active_set(r.allocation) == oracle);
      jobs.push_back(r.job);
    }
  } else {
    for (const auto& p : trace.series) {
      out.flags.push_back(p.optimal_set_match);
      jobs.push_back(p.job);
    }
  }
  out.first_match = first_stable_match(out.flags, jobs);
  return out;
}

void write_trace_csv(std::ostream& out, const SimulationTrace& trace) {
  out << "t,neg_social_welfare_cum,payment_cum,oracle_cost_cum,active_set_size,optimal_set_match,regret_avg\n";
  for (const auto& p : trace.series) {
    out << p.job << ',' << format_number(p.neg_social_welfare_cum) << ',' << format_number(p.payment_cum) << ','
        << format_number(p.oracle_cost_cum) << ',' << p.active_set_size << ',' << (p.optimal_set_match ? 1 : 0) << ','
        << format_number(p.regret_avg) << '\n';
  }
}

void write_payments_csv(std::ostream& out, const SimulationTrace& trace) {
  out << "t,worker,fraction,payment,utility\n";
  for (const auto& r : trace.records) {
    write_payment_rows(out, r.allocation, r.settlement);
  }
}

nlohmann::json summarize(const SimulationTrace& trace) {
  const TracePoint last = trace.series.empty() ? TracePoint{} : trace.series.back();
  const auto match = optimal_set_match(trace);
  nlohmann::json j;
  j["jobs_completed"] = trace.completed();
  j["jobs_infeasible"] = trace.infeasible_jobs.size();
  j["neg_social_welfare_total"] = last.neg_social_welfare_cum;
  j["payment_total"] = last.payment_cum;
  j["oracle_cost_total"] = last.oracle_cost_cum;
  j["oracle_payment_total"] = last.oracle_payment_cum;
  j["oracle_cost_per_job"] = trace.oracle_cost;
  j["oracle_payment_per_job"] = trace.oracle_payment;
  j["oracle_active_set_size"] = trace.oracle.active_count();
  j["regret_total"] = last.regret_cum;
  j["regret_avg_final"] = last.regret_avg;
  j["first_optimal_match"] = match.first_match ? nlohmann::json(*match.first_match) : nlohmann::json(nullptr);
  j["truthful"] = trace.truthful;
  if (trace.truthful) {
    j["min_truthful_utility"] = trace.min_truthful_utility;
  }
  return j;
}

}  // namespace crowdalloc
