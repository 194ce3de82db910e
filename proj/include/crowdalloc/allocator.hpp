#pragma once

#include "crowdalloc/market.hpp"
#include "crowdalloc/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace crowdalloc {

/// Largest fraction of a job a worker with mean completion time `rho` and mean time to failure
/// `beta` can take while meeting the deadline and the failure threshold.
template <typename Scalar>
Scalar cap_from_means(Scalar rho, Scalar beta, Scalar deadline, Scalar epsilon) {
  using std::log1p;
  using std::min;
  const Scalar longest_work = min(deadline, beta * -log1p(-epsilon));
  return min(Scalar(1), longest_work / rho);
}

/// Split of one job across workers, indexed by worker id.
template <typename Scalar>
struct BasicAllocation {
  VectorX<Scalar> fractions;
  std::vector<Index> bid_order;  // worker ids by ascending bid, ties by id
  Index last_rank = -1;          // rank of the last worker with a positive fraction

  Index size() const { return fractions.size(); }
  Index last_active() const { return bid_order[static_cast<std::size_t>(last_rank)]; }
  bool active(Index worker) const { return fractions[worker] > Scalar(0); }
  Index active_count() const { return (fractions.array() > Scalar(0)).count(); }

  /// Rank of each worker in bid_order.
  std::vector<Index> ranks() const {
    std::vector<Index> r(bid_order.size());
    for (std::size_t k = 0; k < bid_order.size(); ++k) {
      r[static_cast<std::size_t>(bid_order[k])] = static_cast<Index>(k);
    }
    return r;
  }

  template <typename Derived>
  Scalar cost(const Eigen::MatrixBase<Derived>& unit_costs) const {
    return fractions.dot(unit_costs);
  }
};

using Allocation = BasicAllocation<double>;

template <typename Derived>
std::vector<Index> bid_order(const Eigen::MatrixBase<Derived>& bids) {
  std::vector<Index> order(static_cast<std::size_t>(bids.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return bids[a] < bids[b]; });
  return order;
}

/// Shortfall below which the last active worker absorbs the rest of the job instead of the job
/// being declared infeasible.
template <typename Scalar>
constexpr Scalar feasibility_tolerance() {
  return std::numeric_limits<Scalar>::epsilon() * Scalar(1024);
}

/// Cheapest-first greedy fill: each worker in ascending bid order takes min(cap, remaining).
/// Throws InfeasibleJob when the caps cannot cover the job.
template <typename DerivedB, typename DerivedC>
BasicAllocation<typename DerivedB::Scalar> sw_greedy(const Eigen::MatrixBase<DerivedB>& bids,
                                                     const Eigen::MatrixBase<DerivedC>& caps) {
  using Scalar = typename DerivedB::Scalar;
  using std::min;
  if (bids.size() != caps.size()) {
    throw std::invalid_argument("sw_greedy: bids and caps differ in length");
  }
  BasicAllocation<Scalar> alloc;
  alloc.fractions = VectorX<Scalar>::Zero(bids.size());
  alloc.bid_order = bid_order(bids);

  Scalar remaining(1);
  for (std::size_t r = 0; r < alloc.bid_order.size() && remaining > Scalar(0); ++r) {
    const Index i = alloc.bid_order[r];
    const Scalar x = min(Scalar(caps[i]), remaining);
    if (x > Scalar(0)) {
      alloc.fractions[i] = x;
      remaining -= x;
      alloc.last_rank = static_cast<Index>(r);
    }
  }
  if (remaining > Scalar(0)) {
    if (alloc.last_rank < 0 || remaining > feasibility_tolerance<Scalar>()) {
      throw InfeasibleJob("infeasible job: caps sum to " + std::to_string(static_cast<double>(caps.sum())) +
                          ", below 1");
    }
    alloc.fractions[alloc.last_active()] += remaining;
  }
  return alloc;
}

/// Caps computed from the true means of each worker.
inline VectorXd true_caps(std::span<const WorkerProfile> workers, double deadline, double epsilon) {
  VectorXd caps(static_cast<Index>(workers.size()));
  for (std::size_t i = 0; i < workers.size(); ++i) {
    caps[static_cast<Index>(i)] = cap_from_means(workers[i].mjct, workers[i].mttf, deadline, epsilon);
  }
  return caps;
}

/// Optimal allocation when costs and means are known: the greedy fill over true caps.
template <typename Derived>
Allocation oracle_allocate(const Eigen::MatrixBase<Derived>& costs, std::span<const WorkerProfile> workers,
                           double deadline, double epsilon) {
  return sw_greedy(costs, true_caps(workers, deadline, epsilon));
}

/// Extra fraction the last active worker of `alloc` could still absorb.
template <typename Scalar, typename Derived>
Scalar delta_separation(const BasicAllocation<Scalar>& alloc, const Eigen::MatrixBase<Derived>& caps) {
  using std::max;
  const Index k = alloc.last_active();
  return max(Scalar(0), Scalar(caps[k]) - alloc.fractions[k]);
}

/// Worker ids with a positive fraction, ascending.
template <typename Scalar>
std::vector<Index> active_set(const BasicAllocation<Scalar>& alloc) {
  std::vector<Index> out;
  for (Index i = 0; i < alloc.size(); ++i) {
    if (alloc.active(i)) {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace crowdalloc
