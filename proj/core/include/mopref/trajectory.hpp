#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mopref/momdp.hpp"

namespace mopref {

struct WeightedTrajectory {
  double weight = 0.0;
  Trajectory trajectory;
};

/// Small set of support trajectories whose weighted return equals the value
/// of the represented policy.
struct WeightedTrajectorySet {
  std::vector<WeightedTrajectory> items;
  std::string policy_digest;

  /// Sum of weight * return over the items.
  ValueVector represented_value(const Momdp& mdp) const;
};

/// Tail values V(s, h): expected return over the last h steps from state s,
/// following the policy's actions for steps H-h .. H-1.
class TailValueTable {
 public:
  TailValueTable(const Momdp& mdp, const Policy& policy);

  const ValueVector& at(StateIndex s, int remaining) const {
    return table_[static_cast<std::size_t>(remaining) * num_states_ + s];
  }
  int horizon() const noexcept { return horizon_; }

 private:
  int horizon_;
  std::size_t num_states_;
  std::vector<ValueVector> table_;
};

/// Weighted prefixes of a common length t: one stage of expand_compress.
using PrefixStage = std::vector<WeightedTrajectory>;

/// Builds a trajectory set of at most k+1 items by growing prefixes one step
/// at a time and compressing their expected completed returns. When `stages`
/// is given it receives Q^(0) .. Q^(H).
WeightedTrajectorySet expand_compress(const Momdp& mdp, const Policy& policy,
                                      std::vector<PrefixStage>* stages = nullptr);

/// Time-unrolled graph of reachable states carrying the policy's unit flow.
/// Layer t (0..H) holds the states reachable at step t; every layer-H vertex
/// has one edge to the sink.
class LayerGraph {
 public:
  static constexpr StateIndex kSink = std::numeric_limits<StateIndex>::max();

  struct Edge {
    int layer;
    StateIndex from;
    StateIndex to;  // kSink on the last layer
    double flow;
  };

  LayerGraph(const Momdp& mdp, const Policy& policy);

  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::vector<Edge>& edges() noexcept { return edges_; }
  const std::vector<std::vector<StateIndex>>& layers() const noexcept { return layers_; }
  /// Edge indices leaving (layer, state), ordered by target state.
  std::span<const std::size_t> out_edges(int layer, StateIndex s) const;

  double source_outflow() const;
  /// Largest |inflow - outflow| over internal vertices.
  double max_conservation_residual() const;
  double max_flow() const;

 private:
  std::size_t num_states_;
  std::vector<std::vector<StateIndex>> layers_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> out_;  // indexed layer * |S| + state
};

/// Flow-decomposition representation. Paths are extracted by following the
/// lowest-index successor with positive flow; each extraction subtracts the
/// path's bottleneck. With `compress`, the paths' returns are reduced to at
/// most k+1 items. `residual` (optional) receives the graph after extraction.
WeightedTrajectorySet flow_decompose(const Momdp& mdp, const Policy& policy, bool compress,
                                     LayerGraph* residual = nullptr);

/// Representation of a randomized mixture: represent each component, scale
/// by its weight, merge, compress.
WeightedTrajectorySet represent_mixture(const Momdp& mdp, const MixturePolicy& mixture);
/// Same, reusing precomputed per-component sets (one per component, in order).
WeightedTrajectorySet represent_mixture(const Momdp& mdp, const MixturePolicy& mixture,
                                        std::span<const WeightedTrajectorySet> component_sets);

std::string mixture_digest(const MixturePolicy& mixture);

struct SetValidation {
  bool simplex = true;
  bool size = true;
  bool support = true;
  bool value = true;
  double value_error = 0.0;
  std::vector<std::string> failures;

  bool ok() const noexcept { return simplex && size && support && value; }
};

/// Checks simplex weights (1e-12), at most k+1 items, positive probability of
/// every trajectory, and |sum w Phi - V|_inf <= 1e-8.
SetValidation validate_set(const Momdp& mdp, const MixturePolicy& policy,
                           const WeightedTrajectorySet& set);
SetValidation validate_set(const Momdp& mdp, const Policy& policy,
                           const WeightedTrajectorySet& set);

nlohmann::json trajectory_set_to_json(const Momdp& mdp, const WeightedTrajectorySet& set);
WeightedTrajectorySet trajectory_set_from_json(const Momdp& mdp, const nlohmann::json& document);

}  // namespace mopref
