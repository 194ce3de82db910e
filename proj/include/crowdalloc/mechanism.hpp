#pragma once

#include "crowdalloc/allocator.hpp"
#include "crowdalloc/types.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <random>
#include <vector>

namespace crowdalloc {

/// Settlement of one job: externalities, payments, and utilities at true costs.
template <typename Scalar>
struct BasicPaymentRecord {
  long job = 0;
  Eigen::SparseMatrix<Scalar> externality;  // (i, j): extra fraction j would take if i were absent
  VectorX<Scalar> payments;
  VectorX<Scalar> utilities;
};

using PaymentRecord = BasicPaymentRecord<double>;

namespace detail {

template <typename Scalar>
Index rank_of(const BasicAllocation<Scalar>& alloc, Index worker) {
  const auto it = std::find(alloc.bid_order.begin(), alloc.bid_order.end(), worker);
  return static_cast<Index>(it - alloc.bid_order.begin());
}

template <typename Scalar, typename DerivedC>
VectorX<Scalar> externality_row_at(Index i, Index rank_i, const BasicAllocation<Scalar>& alloc,
                                   const Eigen::MatrixBase<DerivedC>& caps) {
  using std::max;
  using std::min;
  VectorX<Scalar> row = VectorX<Scalar>::Zero(alloc.size());
  const Index last = alloc.last_rank;
  if (last < 0 || rank_i > last) {
    return row;
  }
  const Scalar share = alloc.fractions[i];
  Scalar taken(0);
  for (Index r = last; r < alloc.size() && taken < share; ++r) {
    const Index j = alloc.bid_order[static_cast<std::size_t>(r)];
    if (j == i) {
      continue;
    }
    // The last active worker first tops up to its cap; later workers fill what is still missing.
    Scalar z = (r == last) ? min(Scalar(caps[j]) - alloc.fractions[j], share) : min(Scalar(caps[j]), share - taken);
    z = max(z, Scalar(0));
    row[j] = z;
    taken += z;
  }
  return row;
}

template <typename Scalar, typename DerivedR, typename DerivedB>
Scalar payment_at(Index i, Index rank_i, const BasicAllocation<Scalar>& alloc, const Eigen::MatrixBase<DerivedR>& row,
                  const Eigen::MatrixBase<DerivedB>& bids, Scalar c_bar) {
  using std::max;
  if (rank_i > alloc.last_rank) {
    return Scalar(0);
  }
  // sum_s ext_s b_s + (x - sum_s ext_s) c_bar, regrouped around b_i x_i so that every added term is
  // non-negative: ext_s is non-zero only for workers ranked at or after the last active one.
  const Scalar share = alloc.fractions[i];
  const Scalar bid = bids[i];
  Scalar premium(0);
  Scalar covered(0);
  for (Index j = 0; j < row.size(); ++j) {
    if (row[j] > Scalar(0)) {
      premium += row[j] * (Scalar(bids[j]) - bid);
      covered += row[j];
    }
  }
  const Scalar residual = max(Scalar(0), share - covered);
  return bid * share + premium + residual * (c_bar - bid);
}

}  // namespace detail

/// Row i of the externality matrix: how much more each worker would receive if i were absent.
template <typename Scalar, typename DerivedC>
VectorX<Scalar> externality_row(Index i, const BasicAllocation<Scalar>& alloc, const Eigen::MatrixBase<DerivedC>& caps) {
  return detail::externality_row_at(i, detail::rank_of(alloc, i), alloc, caps);
}

template <typename Scalar, typename DerivedC>
Scalar externality(Index i, Index j, const BasicAllocation<Scalar>& alloc, const Eigen::MatrixBase<DerivedC>& caps) {
  return externality_row(i, alloc, caps)[j];
}

/// Payment to worker i: externalities priced at the displaced workers' bids, any part of x_i
/// nobody else could absorb priced at c_bar. Zero past the last active worker.
template <typename Scalar, typename DerivedR, typename DerivedB>
Scalar payment(Index i, const BasicAllocation<Scalar>& alloc, const Eigen::MatrixBase<DerivedR>& row,
               const Eigen::MatrixBase<DerivedB>& bids, Scalar c_bar) {
  return detail::payment_at(i, detail::rank_of(alloc, i), alloc, row, bids, c_bar);
}

template <typename Scalar, typename DerivedP>
Scalar utility(Index i, Scalar true_cost, const BasicAllocation<Scalar>& alloc, const Eigen::MatrixBase<DerivedP>& payments) {
  return Scalar(payments[i]) - true_cost * alloc.fractions[i];
}

/// Externalities, payments and utilities for every worker of one allocated job.
template <typename Scalar, typename DerivedC, typename DerivedB, typename DerivedT>
BasicPaymentRecord<Scalar> settle(long job, const BasicAllocation<Scalar>& alloc, const Eigen::MatrixBase<DerivedC>& caps,
                                  const Eigen::MatrixBase<DerivedB>& bids, const Eigen::MatrixBase<DerivedT>& true_costs,
                                  Scalar c_bar) {
  const Index n = alloc.size();
  BasicPaymentRecord<Scalar> record;
  record.job = job;
  record.payments = VectorX<Scalar>::Zero(n);
  record.utilities = VectorX<Scalar>::Zero(n);
  record.externality.resize(n, n);

  std::vector<Eigen::Triplet<Scalar>> entries;
  for (Index r = 0; r <= alloc.last_rank; ++r) {
    const Index i = alloc.bid_order[static_cast<std::size_t>(r)];
    const VectorX<Scalar> row = detail::externality_row_at(i, r, alloc, caps);
    for (Index j = 0; j < n; ++j) {
      if (row[j] != Scalar(0)) {
        entries.emplace_back(i, j, row[j]);
      }
    }
    record.payments[i] = detail::payment_at(i, r, alloc, row, bids, c_bar);
  }
  record.externality.setFromTriplets(entries.begin(), entries.end());
  for (Index i = 0; i < n; ++i) {
    record.utilities[i] = utility(i, Scalar(true_costs[i]), alloc, record.payments);
  }
  return record;
}

/// A single-job mechanism instance with frozen caps. Every worker but the one under test bids
/// its true cost.
struct MechanismInstance {
  VectorXd costs;
  VectorXd caps;
  Bounds cost_bounds;
};

/// Utility of `agent` when bidding `bid` while everyone else is truthful.
double deviation_utility(const MechanismInstance& instance, Index agent, double bid);

/// `points` evenly spaced bids over the cost bounds, plus the agent's true cost, every other
/// worker's bid (crossing points), and midpoints between consecutive breakpoints.
std::vector<double> deviation_grid(const MechanismInstance& instance, Index agent, int points = 50);

struct DeviationResult {
  double max_gain = 0.0;  // max over the grid of u(b) - u(c)
  double best_bid = 0.0;
  double truthful_utility = 0.0;
};

DeviationResult deviation_sweep(const MechanismInstance& instance, Index agent, std::span<const double> grid);

/// Largest utility gain from a misreport that still counts as "no profitable deviation".
inline constexpr double kDsicTolerance = 1e-9;

/// Running totals of a deviation search over many instances.
struct DsicReport {
  long instances = 0;
  long agents_checked = 0;
  long bids_evaluated = 0;
  double max_gain = 0.0;
  double min_truthful_utility = std::numeric_limits<double>::infinity();

  /// Sweeps every agent of `instance` over its deviation grid.
  void add(const MechanismInstance& instance, int grid_points);
  bool passed() const { return max_gain <= kDsicTolerance && min_truthful_utility >= 0.0; }
};

/// Random feasible instance: caps in [0.05, 1] summing to at least 1, costs uniform in the bounds,
/// a quarter of them rounded to whole numbers so that ties occur.
MechanismInstance random_instance(std::mt19937_64& rng, Index workers, Bounds cost_bounds);

/// `instances` random instances of 1..max_workers workers, each swept with `grid_points` bids per agent.
DsicReport dsic_check(int instances, int max_workers, int grid_points, Bounds cost_bounds, std::uint64_t seed);

/// t,worker,fraction,payment,utility rows for active workers.
void write_payment_rows(std::ostream& out, const Allocation& alloc, const PaymentRecord& record);

}  // namespace crowdalloc
