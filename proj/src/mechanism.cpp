#include "crowdalloc/mechanism.hpp"

#include "crowdalloc/csv.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace crowdalloc {

double deviation_utility(const MechanismInstance& instance, Index agent, double bid) {
  VectorXd bids = instance.costs;
  bids[agent] = bid;
  const Allocation alloc = sw_greedy(bids, instance.caps);
  const VectorXd row = externality_row(agent, alloc, instance.caps);
  const double pay = payment(agent, alloc, row, bids, instance.cost_bounds.hi);
  return pay - instance.costs[agent] * alloc.fractions[agent];
}

std::vector<double> deviation_grid(const MechanismInstance& instance, Index agent, int points) {
  const Bounds& range = instance.cost_bounds;
  std::vector<double> grid;
  for (int k = 0; k < points; ++k) {
    const double u = points > 1 ? static_cast<double>(k) / (points - 1) : 0.0;
    grid.push_back(range.lo + u * range.width());
  }
  std::vector<double> breaks{range.lo, range.hi, instance.costs[agent]};
  for (Index j = 0; j < instance.costs.size(); ++j) {
    if (j != agent && range.contains(instance.costs[j])) {
      breaks.push_back(instance.costs[j]);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  for (std::size_t k = 0; k < breaks.size(); ++k) {
    grid.push_back(breaks[k]);
    if (k + 1 < breaks.size()) {
      grid.push_back(0.5 * (breaks[k] + breaks[k + 1]));
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

DeviationResult deviation_sweep(const MechanismInstance& instance, Index agent, std::span<const double> grid) {
  DeviationResult result;
  result.truthful_utility = deviation_utility(instance, agent, instance.costs[agent]);
  result.best_bid = instance.costs[agent];
  for (double bid : grid) {
    const double gain = deviation_utility(instance, agent, bid) - result.truthful_utility;
    if (gain > result.max_gain) {
      result.max_gain = gain;
      result.best_bid = bid;
    }
  }
  return result;
}

void DsicReport::add(const MechanismInstance& instance, int grid_points) {
  ++instances;
  for (Index agent = 0; agent < instance.costs.size(); ++agent) {
    const auto grid = deviation_grid(instance, agent, grid_points);
    const DeviationResult res = deviation_sweep(instance, agent, grid);
    ++agents_checked;
    bids_evaluated += static_cast<long>(grid.size());
    max_gain = std::max(max_gain, res.max_gain);
    min_truthful_utility = std::min(min_truthful_utility, res.truthful_utility);
  }
}

MechanismInstance random_instance(std::mt19937_64& rng, Index workers, Bounds cost_bounds) {
  std::uniform_real_distribution<double> cap_draw(0.05, 1.0);
  std::uniform_real_distribution<double> cost_draw(cost_bounds.lo, cost_bounds.hi);
  std::bernoulli_distribution round_cost(0.25);
  MechanismInstance instance;
  instance.cost_bounds = cost_bounds;
  instance.costs.resize(workers);
  instance.caps.resize(workers);
  do {
    for (Index i = 0; i < workers; ++i) {
      instance.caps[i] = cap_draw(rng);
    }
  } while (instance.caps.sum() < 1.0 && workers > 1);
  if (workers == 1) {
    instance.caps[0] = 1.0;
  }
  for (Index i = 0; i < workers; ++i) {
    double c = cost_draw(rng);
    if (round_cost(rng)) {
      c = cost_bounds.clamp(std::round(c));
    }
    instance.costs[i] = c;
  }
  return instance;
}

DsicReport dsic_check(int instances, int max_workers, int grid_points, Bounds cost_bounds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> size_draw(1, max_workers);
  DsicReport report;
  for (int k = 0; k < instances; ++k) {
    report.add(random_instance(rng, size_draw(rng), cost_bounds), grid_points);
  }
  return report;
}

void write_payment_rows(std::ostream& out, const Allocation& alloc, const PaymentRecord& record) {
  for (Index i = 0; i < alloc.size(); ++i) {
    if (!alloc.active(i)) {
      continue;
    }
    out << record.job << ',' << i << ',' << format_number(alloc.fractions[i]) << ','
        << format_number(record.payments[i]) << ',' << format_number(record.utilities[i]) << '\n';
  }
}

}  // namespace crowdalloc
