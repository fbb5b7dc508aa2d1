#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace mopref {

class NotASimplex : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Compression {
  std::vector<std::size_t> kept;  // ascending indices into the input
  std::vector<double> weights;    // parallel to `kept`
};

/// Weights at or below this are treated as zero and their points dropped.
inline constexpr double kWeightFloor = 1e-15;

/// Carathéodory compression of a convex combination. `points` holds one
/// k-dimensional point per column. Returns at most k+1 of them with new
/// simplex weights and the same weighted mean.
///
/// Each round lifts the first k+2 surviving points by a trailing 1, takes a
/// null vector x of the lifted (k+1) x (k+2) system from a Householder
/// factorization, orients it so x[i0] > 0 at i0 = argmax |x_i| / p_i, and
/// moves the weights by -(p[i0] / x[i0]) * x, which zeroes i0 and keeps the
/// mean and the total mass.
///
/// Throws NotASimplex if a weight is negative, the weights do not sum to one
/// within 1e-9, or the sizes disagree.
Compression c4_compress(const Eigen::MatrixXd& points, std::span<const double> weights);

}  // namespace mopref
