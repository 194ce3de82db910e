#include "crowdalloc/simulator.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace crowdalloc;

namespace {

// Small heterogeneous market that is feasible at initialization: eps chosen so that the
// pessimistic caps (rho_max, beta_min) of 12 workers just cover a job.
MarketConfig small_market(long jobs, std::uint64_t seed = 3) {
  MarketConfig m;
  m.workers = 12;
  m.jobs = jobs;
  m.epsilon = 1.0 - std::pow(0.99, 40.0);
  m.seed = seed;
  return m;
}

PopulationRecipe small_recipe() {
  return PopulationRecipe::high_and_mediocre(8, 4);
}

SimulationTrace run_small(long jobs, Mode mode, std::uint64_t seed = 3) {
  const auto market = small_market(jobs, seed);
  RunOptions options;
  options.mode = mode;
  return run(market, EstimatorConfig::for_market(market), small_recipe(), options);
}

std::string trace_csv(const SimulationTrace& trace) {
  std::ostringstream out;
  write_trace_csv(out, trace);
  return out.str();
}

}  // namespace

TEST(Simulator, ZeroJobsGiveEmptyTrace) {
  const auto trace = run_small(0, Mode::Learning);
  EXPECT_EQ(trace.completed(), 0);
  EXPECT_EQ(regret(trace).total, 0.0);
  EXPECT_FALSE(optimal_set_match(trace).first_match.has_value());
}

TEST(Simulator, KnownMeansReproducesOracleEveryJob) {
  const auto trace = run_small(200, Mode::KnownMeans);
  ASSERT_EQ(trace.completed(), 200);
  for (const auto& r : trace.records) {
    EXPECT_EQ(r.allocation.fractions, trace.oracle.fractions);
  }
  const auto reg = regret(trace);
  EXPECT_EQ(reg.total, 0.0);
  EXPECT_EQ(trace.series.back().regret_cum, 0.0);
  const auto match = optimal_set_match(trace);
  EXPECT_TRUE(std::all_of(match.flags.begin(), match.flags.end(), [](bool f) { return f; }));
  EXPECT_EQ(match.first_match, 1);
  EXPECT_DOUBLE_EQ(trace.series.back().neg_social_welfare_cum, trace.series.back().oracle_cost_cum);
}

TEST(Simulator, PessimisticStartUsesSupersetOfOptimalSet) {
  const auto trace = run_small(1, Mode::Learning);
  ASSERT_EQ(trace.completed(), 1);
  const auto& first = trace.records.front();
  EXPECT_FALSE(first.optimal_set);
  const auto optimal = active_set(trace.oracle);
  const auto chosen = active_set(first.allocation);
  EXPECT_GT(chosen.size(), optimal.size());
  EXPECT_TRUE(std::includes(chosen.begin(), chosen.end(), optimal.begin(), optimal.end()));
}

TEST(Simulator, AllocationsCoverJobWithinCaps) {
  const auto trace = run_small(500, Mode::Learning);
  for (const auto& r : trace.records) {
    EXPECT_NEAR(r.allocation.fractions.sum(), 1.0, 1e-12);
    for (Index i = 0; i < r.caps.size(); ++i) {
      EXPECT_LE(r.allocation.fractions[i], r.caps[i] + 1e-12);
    }
  }
}

TEST(Simulator, TruthfulWorkersNeverLoseMoney) {
  const auto trace = run_small(500, Mode::Learning);
  ASSERT_TRUE(trace.truthful);
  EXPECT_GE(trace.min_truthful_utility, 0.0);
  for (const auto& r : trace.records) {
    EXPECT_GE(r.settlement.utilities.minCoeff(), 0.0) << "job " << r.job;
    EXPECT_GE(r.settlement.payments.sum(), r.allocation.cost(trace.costs));
  }
}

TEST(Simulator, IncurredCostNeverBelowOracle) {
  const auto trace = run_small(500, Mode::Learning);
  for (const auto& p : trace.series) {
    EXPECT_GE(p.neg_social_welfare_cum, p.oracle_cost_cum - 1e-9);
  }
}

TEST(Simulator, LearningStateAdvances) {
  const auto trace = run_small(300, Mode::Learning);
  std::size_t samples = 0;
  for (const auto& s : trace.final_stats) {
    samples += s.jct_count();
    EXPECT_LE(s.rho.minus, s.rho.plus);
    EXPECT_LE(s.beta.minus, s.beta.plus);
  }
  EXPECT_GT(samples, 300u);
}

TEST(Simulator, SameSeedSameBytes) {
  EXPECT_EQ(trace_csv(run_small(300, Mode::Learning, 9)), trace_csv(run_small(300, Mode::Learning, 9)));
  EXPECT_NE(trace_csv(run_small(300, Mode::Learning, 9)), trace_csv(run_small(300, Mode::Learning, 10)));
}

TEST(Simulator, StepByStepMatchesRun) {
  const auto market = small_market(50);
  const auto workers = sample_population(market, small_recipe());
  Simulation sim(market, EstimatorConfig::for_market(market), workers);
  while (!sim.done()) {
    ASSERT_TRUE(sim.step().has_value());
  }
  EXPECT_EQ(trace_csv(sim.trace()), trace_csv(run(market, EstimatorConfig::for_market(market), workers)));
}

TEST(Simulator, InfeasibleOracleThrows) {
  MarketConfig market = small_market(5);
  market.epsilon = 0.01;
  EXPECT_THROW(run(market, EstimatorConfig::for_market(market), small_recipe()), InfeasibleJob);
}

TEST(Simulator, InfeasibleJobsRecordedNotFatal) {
  // Feasible for the oracle, but not under pessimistic initialization.
  MarketConfig market = small_market(5);
  market.epsilon = 1.0 - std::pow(0.99, 25.0);
  const auto workers = sample_population(market, small_recipe());
  ASSERT_GE(true_caps(workers, market.deadline, market.epsilon).sum(), 1.0);
  const auto trace = run(market, EstimatorConfig::for_market(market), workers);
  EXPECT_EQ(trace.infeasible_jobs, (std::vector<long>{1, 2, 3, 4, 5}));
  EXPECT_EQ(trace.completed(), 0);
}

TEST(Simulator, MisreportingIsTracked) {
  const auto market = small_market(20);
  const auto workers = sample_population(market, small_recipe());
  RunOptions options;
  BidProfile bids = BidProfile::truthful(workers);
  bids.bids[0] = market.cost.hi;
  options.bids = bids;
  const auto trace = run(market, EstimatorConfig::for_market(market), workers, options);
  EXPECT_FALSE(trace.truthful);
  EXPECT_FALSE(summarize(trace).contains("min_truthful_utility"));
}

TEST(Regret, DefiningSum) {
  const VectorXd costs{{1.0, 2.0, 3.0}};
  const VectorXd oracle{{0.5, 0.5, 0.0}};
  const std::vector<VectorXd> one{VectorXd{{0.4, 0.6, 0.0}}};
  EXPECT_NEAR(regret(one, oracle, costs).total, 0.1, 1e-15);

  const std::vector<VectorXd> exact(4, oracle);
  EXPECT_EQ(regret(exact, oracle, costs).total, 0.0);

  const std::vector<VectorXd> constant(5, VectorXd{{0.4, 0.6, 0.0}});
  const auto series = regret(constant, oracle, costs);
  for (std::size_t t = 0; t < series.average.size(); ++t) {
    EXPECT_NEAR(series.average[t], series.cumulative[t] / static_cast<double>(t + 1), 1e-15);
    EXPECT_NEAR(series.average[t], 0.1, 1e-12);
  }
}

TEST(Regret, TraceSeriesMatchesDefiningSum) {
  const auto trace = run_small(300, Mode::Learning);
  const auto reg = regret(trace);
  ASSERT_EQ(reg.cumulative.size(), trace.series.size());
  for (std::size_t t = 0; t < reg.cumulative.size(); ++t) {
    EXPECT_NEAR(reg.cumulative[t], trace.series[t].regret_cum, 1e-9 * (1.0 + std::abs(reg.cumulative[t])));
  }
}

TEST(OptimalSetMatch, FirstStableMatch) {
  const std::vector<long> jobs{1, 2, 3, 4, 5};
  EXPECT_EQ(first_stable_match({false, true, false, true, true}, jobs), 4);
  EXPECT_EQ(first_stable_match({true, true, true, true, true}, jobs), 1);
  EXPECT_FALSE(first_stable_match({true, true, true, true, false}, jobs).has_value());
  EXPECT_FALSE(first_stable_match({}, {}).has_value());
}

TEST(OptimalSetMatch, SeriesAndRecordsAgree) {
  const auto market = small_market(300);
  RunOptions lean;
  lean.keep_records = false;
  const auto with = run(market, EstimatorConfig::for_market(market), small_recipe());
  const auto without = run(market, EstimatorConfig::for_market(market), small_recipe(), lean);
  EXPECT_TRUE(without.records.empty());
  EXPECT_EQ(optimal_set_match(with).flags, optimal_set_match(without).flags);
  EXPECT_EQ(trace_csv(with), trace_csv(without));
}

TEST(TraceCsv, Header) {
  const auto csv = trace_csv(run_small(2, Mode::KnownMeans));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,neg_social_welfare_cum,payment_cum,oracle_cost_cum,active_set_size,optimal_set_match,regret_avg");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Summary, TotalsMatchLastTracePoint) {
  const auto trace = run_small(100, Mode::Learning);
  const auto j = summarize(trace);
  EXPECT_EQ(j["jobs_completed"], 100);
  EXPECT_EQ(j["payment_total"].get<double>(), trace.series.back().payment_cum);
  EXPECT_EQ(j["regret_total"].get<double>(), trace.series.back().regret_cum);
}

TEST(Mode, ParseRoundTrip) {
  EXPECT_EQ(parse_mode(to_string(Mode::Learning)), Mode::Learning);
  EXPECT_EQ(parse_mode(to_string(Mode::KnownMeans)), Mode::KnownMeans);
  EXPECT_THROW(parse_mode("oracle"), std::invalid_argument);
}
