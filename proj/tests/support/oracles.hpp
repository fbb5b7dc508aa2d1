#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mopref/momdp.hpp"

namespace mopref::testing {

struct TrajectoryMass {
  Trajectory trajectory;
  double probability;
};

/// Every trajectory of positive probability under `policy`, by direct
/// recursion over transition rows.
std::vector<TrajectoryMass> enumerate_trajectories(const Momdp& mdp, const Policy& policy);

/// Sum of probability * reward sum over enumerated trajectories.
ValueVector value_by_enumeration(const Momdp& mdp, const Policy& policy);

/// All time-indexed deterministic policies, by an odometer independent of
/// PolicyEnumerator.
std::vector<Policy> all_policies(const Momdp& mdp);

/// max over all_policies of <w, value_by_enumeration>.
double brute_force_optimum(const Momdp& mdp, const Eigen::VectorXd& w);

/// Numerical rank from the singular values of the stacked vectors.
int numerical_rank(const std::vector<ValueVector>& vectors, double tol);

struct TinyDims {
  int states;
  int actions;  // excluding a0
  int horizon;
  int objectives;
};

/// Random instance with sparse rows (some zero transitions) and per-state
/// action subsets; a0 only at s0.
Momdp random_instance(std::mt19937_64& rng, const TinyDims& dims);

TinyDims random_dims(std::mt19937_64& rng, int max_states, int max_actions, int max_horizon,
                     int max_objectives);

double uniform(std::mt19937_64& rng, double lo = 0.0, double hi = 1.0);

}  // namespace mopref::testing
