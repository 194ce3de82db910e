#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace crowdalloc {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Eigen::Index;
using Eigen::VectorXd;

/// Closed interval [lo, hi].
struct Bounds {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains(const Bounds& other) const { return lo <= other.lo && other.hi <= hi; }
  double clamp(double v) const { return std::clamp(v, lo, hi); }
  double width() const { return hi - lo; }
};

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidRecipe : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the per-worker caps cannot cover a whole job.
class InfeasibleJob : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace crowdalloc
