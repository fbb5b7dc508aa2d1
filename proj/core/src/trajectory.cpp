#include "mopref/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mopref/compress.hpp"
#include "mopref/io.hpp"

namespace mopref {

using nlohmann::json;

namespace {

constexpr double kFlowThreshold = 1e-12;

void normalize(std::vector<WeightedTrajectory>& items) {
  double total = 0.0;
  for (const auto& item : items) total += item.weight;
  if (total > 0.0)
    for (auto& item : items) item.weight /= total;
}

/// Compresses `items` by their returns; `returns` is k x n.
std::vector<WeightedTrajectory> compress_by(const Eigen::MatrixXd& returns,
                                            std::vector<WeightedTrajectory> items) {
  std::vector<double> weights;
  weights.reserve(items.size());
  for (const auto& item : items) weights.push_back(item.weight);
  const Compression c = c4_compress(returns, weights);
  std::vector<WeightedTrajectory> kept;
  kept.reserve(c.kept.size());
  for (std::size_t i = 0; i < c.kept.size(); ++i)
    kept.push_back({c.weights[i], std::move(items[c.kept[i]].trajectory)});
  return kept;
}

}  // namespace

ValueVector WeightedTrajectorySet::represented_value(const Momdp& mdp) const {
  ValueVector total = ValueVector::Zero(mdp.objectives());
  for (const auto& item : items) total += item.weight * trajectory_return(mdp, item.trajectory);
  return total;
}

TailValueTable::TailValueTable(const Momdp& mdp, const Policy& policy)
    : horizon_(mdp.horizon()), num_states_(mdp.num_states()) {
  check_policy(mdp, policy);
  const auto k = static_cast<Eigen::Index>(mdp.objectives());
  table_.assign(static_cast<std::size_t>(horizon_ + 1) * num_states_, ValueVector::Zero(k));
  for (int remaining = 1; remaining <= horizon_; ++remaining) {
    const int step = horizon_ - remaining;
    for (StateIndex s = 0; s < num_states_; ++s) {
      const ActionIndex a = policy.action(step, s);
      ValueVector v = mdp.reward(s, a);
      for (const Successor& nxt : mdp.successors(s, a))
        v += nxt.probability * at(nxt.state, remaining - 1);
      table_[static_cast<std::size_t>(remaining) * num_states_ + s] = std::move(v);
    }
  }
}

WeightedTrajectorySet expand_compress(const Momdp& mdp, const Policy& policy,
                                      std::vector<PrefixStage>* stages) {
  const TailValueTable tail(mdp, policy);
  const int horizon = mdp.horizon();
  const auto k = static_cast<Eigen::Index>(mdp.objectives());

  std::vector<WeightedTrajectory> prefixes{{1.0, Trajectory{{mdp.initial_state()}, {}}}};
  std::vector<ValueVector> prefix_returns{ValueVector::Zero(k)};
  if (stages) {
    stages->clear();
    stages->push_back(prefixes);
  }

  for (int t = 0; t < horizon; ++t) {
    std::vector<WeightedTrajectory> grown;
    std::vector<ValueVector> grown_returns;
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      const StateIndex s = prefixes[i].trajectory.states.back();
      const ActionIndex a = policy.action(t, s);
      for (const Successor& nxt : mdp.successors(s, a)) {
        Trajectory extended = prefixes[i].trajectory;
        extended.actions.push_back(a);
        extended.states.push_back(nxt.state);
        grown.push_back({prefixes[i].weight * nxt.probability, std::move(extended)});
        grown_returns.push_back(prefix_returns[i] + mdp.reward(s, a));
      }
    }

    // J(tau) = Phi(tau) + V(s_{t+1}, H - t - 1)
    Eigen::MatrixXd completed(k, static_cast<Eigen::Index>(grown.size()));
    for (std::size_t j = 0; j < grown.size(); ++j)
      completed.col(static_cast<Eigen::Index>(j)) =
          grown_returns[j] + tail.at(grown[j].trajectory.states.back(), horizon - t - 1);

    std::vector<double> weights;
    weights.reserve(grown.size());
    for (const auto& g : grown) weights.push_back(g.weight);
    const Compression c = c4_compress(completed, weights);

    prefixes.clear();
    prefix_returns.clear();
    for (std::size_t i = 0; i < c.kept.size(); ++i) {
      prefixes.push_back({c.weights[i], std::move(grown[c.kept[i]].trajectory)});
      prefix_returns.push_back(std::move(grown_returns[c.kept[i]]));
    }
    if (stages) stages->push_back(prefixes);
  }

  normalize(prefixes);
  return {std::move(prefixes), policy_digest(policy)};
}

// ---------------------------------------------------------------------------

LayerGraph::LayerGraph(const Momdp& mdp, const Policy& policy) : num_states_(mdp.num_states()) {
  check_policy(mdp, policy);
  const int horizon = mdp.horizon();
  layers_.assign(static_cast<std::size_t>(horizon + 1), {});
  out_.assign(static_cast<std::size_t>(horizon + 1) * num_states_, {});

  std::vector<double> mass(num_states_, 0.0);
  mass[mdp.initial_state()] = 1.0;
  for (int t = 0; t <= horizon; ++t) {
    std::vector<double> next(num_states_, 0.0);
    for (StateIndex s = 0; s < num_states_; ++s) {
      if (mass[s] <= 0.0) continue;
      layers_[static_cast<std::size_t>(t)].push_back(s);
      auto& out = out_[static_cast<std::size_t>(t) * num_states_ + s];
      if (t == horizon) {
        out.push_back(edges_.size());
        edges_.push_back({t, s, kSink, mass[s]});
        continue;
      }
      const ActionIndex a = policy.action(t, s);
      for (const Successor& nxt : mdp.successors(s, a)) {
        const double f = nxt.probability * mass[s];
        out.push_back(edges_.size());
        edges_.push_back({t, s, nxt.state, f});
        next[nxt.state] += f;
      }
    }
    mass = std::move(next);
  }
}

std::span<const std::size_t> LayerGraph::out_edges(int layer, StateIndex s) const {
  return out_.at(static_cast<std::size_t>(layer) * num_states_ + s);
}

double LayerGraph::source_outflow() const {
  double total = 0.0;
  for (const Edge& e : edges_)
    if (e.layer == 0) total += e.flow;
  return total;
}

double LayerGraph::max_conservation_residual() const {
  const auto last = static_cast<int>(layers_.size()) - 1;
  std::vector<double> balance(layers_.size() * num_states_, 0.0);
  for (const Edge& e : edges_) {
    balance[static_cast<std::size_t>(e.layer) * num_states_ + e.from] -= e.flow;
    if (e.to != kSink) balance[static_cast<std::size_t>(e.layer + 1) * num_states_ + e.to] += e.flow;
  }
  double worst = 0.0;
  for (int t = 1; t <= last; ++t)
    for (StateIndex s = 0; s < num_states_; ++s)
      worst = std::max(worst, std::abs(balance[static_cast<std::size_t>(t) * num_states_ + s]));
  return worst;
}

double LayerGraph::max_flow() const {
  double worst = 0.0;
  for (const Edge& e : edges_) worst = std::max(worst, e.flow);
  return worst;
}

WeightedTrajectorySet flow_decompose(const Momdp& mdp, const Policy& policy, bool compress,
                                     LayerGraph* residual) {
  LayerGraph graph(mdp, policy);
  auto& edges = graph.edges();
  const int horizon = mdp.horizon();
  const StateIndex source = mdp.initial_state();

  auto pick = [&](int layer, StateIndex s) -> std::optional<std::size_t> {
    const auto out = graph.out_edges(layer, s);
    for (std::size_t e : out)
      if (edges[e].flow > kFlowThreshold) return e;
    // Rounding residue: still follow any positive edge so the walk completes.
    for (std::size_t e : out)
      if (edges[e].flow > 0.0) return e;
    return std::nullopt;
  };

  std::vector<WeightedTrajectory> paths;
  while (true) {
    bool source_active = false;
    for (std::size_t e : graph.out_edges(0, source))
      if (edges[e].flow > kFlowThreshold) source_active = true;
    if (!source_active) break;

    std::vector<std::size_t> path;
    StateIndex at = source;
    bool dead_end = false;
    for (int t = 0; t <= horizon; ++t) {
      auto e = pick(t, at);
      if (!e) {
        dead_end = true;
        break;
      }
      path.push_back(*e);
      at = edges[*e].to;
    }
    if (dead_end) {
      // Only reachable through accumulated rounding; drop the stranded edge.
      edges[path.back()].flow = 0.0;
      continue;
    }

    double bottleneck = edges[path.front()].flow;
    for (std::size_t e : path) bottleneck = std::min(bottleneck, edges[e].flow);
    Trajectory trajectory{{source}, {}};
    for (std::size_t e : path) {
      edges[e].flow -= bottleneck;
      if (edges[e].flow <= 0.0) edges[e].flow = 0.0;
      if (edges[e].to == LayerGraph::kSink) continue;
      trajectory.actions.push_back(policy.action(edges[e].layer, edges[e].from));
      trajectory.states.push_back(edges[e].to);
    }
    paths.push_back({bottleneck, std::move(trajectory)});
  }
  if (residual) *residual = graph;

  normalize(paths);
  if (compress && !paths.empty()) {
    Eigen::MatrixXd returns(mdp.objectives(), static_cast<Eigen::Index>(paths.size()));
    for (std::size_t j = 0; j < paths.size(); ++j)
      returns.col(static_cast<Eigen::Index>(j)) = trajectory_return(mdp, paths[j].trajectory);
    paths = compress_by(returns, std::move(paths));
    normalize(paths);
  }
  return {std::move(paths), policy_digest(policy)};
}

// ---------------------------------------------------------------------------

std::string mixture_digest(const MixturePolicy& mixture) {
  const auto& components = mixture.components();
  if (components.size() == 1) return policy_digest(components.front().policy);
  std::ostringstream key;
  key.precision(17);
  for (const auto& c : components) key << c.weight << ':' << policy_digest(c.policy) << ';';
  return sha256_hex(key.str());
}

WeightedTrajectorySet represent_mixture(const Momdp& mdp, const MixturePolicy& mixture) {
  std::vector<WeightedTrajectorySet> parts;
  for (const auto& component : mixture.components())
    parts.push_back(component.weight > 0.0 ? expand_compress(mdp, component.policy)
                                           : WeightedTrajectorySet{});
  return represent_mixture(mdp, mixture, parts);
}

WeightedTrajectorySet represent_mixture(const Momdp& mdp, const MixturePolicy& mixture,
                                        std::span<const WeightedTrajectorySet> component_sets) {
  const auto& components = mixture.components();
  if (component_sets.size() != components.size())
    throw std::invalid_argument("one trajectory set per mixture component required");
  std::vector<WeightedTrajectory> merged;
  for (std::size_t c = 0; c < components.size(); ++c) {
    const auto& component = components[c];
    if (component.weight <= 0.0) continue;
    for (const auto& item : component_sets[c].items) {
      const double w = component.weight * item.weight;
      auto same = std::find_if(merged.begin(), merged.end(), [&](const WeightedTrajectory& m) {
        return m.trajectory == item.trajectory;
      });
      if (same != merged.end())
        same->weight += w;
      else
        merged.push_back({w, item.trajectory});
    }
  }
  Eigen::MatrixXd returns(mdp.objectives(), static_cast<Eigen::Index>(merged.size()));
  for (std::size_t j = 0; j < merged.size(); ++j)
    returns.col(static_cast<Eigen::Index>(j)) = trajectory_return(mdp, merged[j].trajectory);
  auto kept = compress_by(returns, std::move(merged));
  normalize(kept);
  return {std::move(kept), mixture_digest(mixture)};
}

SetValidation validate_set(const Momdp& mdp, const MixturePolicy& policy,
                           const WeightedTrajectorySet& set) {
  SetValidation report;
  double total = 0.0;
  for (const auto& item : set.items) {
    if (!(item.weight >= 0.0)) report.simplex = false;
    total += item.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) report.simplex = false;
  if (!report.simplex) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "weights are not a probability vector (sum " << total << ")";
    report.failures.push_back(msg.str());
  }

  const auto limit = static_cast<std::size_t>(mdp.objectives()) + 1;
  if (set.items.size() > limit) {
    report.size = false;
    report.failures.push_back("set has " + std::to_string(set.items.size()) +
                              " items, more than k+1 = " + std::to_string(limit));
  }

  ValueVector represented = ValueVector::Zero(mdp.objectives());
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    const auto& item = set.items[i];
    bool valid = item.trajectory.states.size() == item.trajectory.actions.size() + 1 &&
                 static_cast<int>(item.trajectory.length()) == mdp.horizon();
    if (valid) {
      for (std::size_t t = 0; t < item.trajectory.actions.size(); ++t)
        if (!mdp.is_available(item.trajectory.states[t], item.trajectory.actions[t])) valid = false;
      for (StateIndex s : item.trajectory.states)
        if (s >= mdp.num_states()) valid = false;
    }
    if (!valid || trajectory_probability(mdp, policy, item.trajectory) <= 0.0) {
      report.support = false;
      report.failures.push_back("item " + std::to_string(i) + " is outside the policy's support");
      continue;
    }
    represented += item.weight * trajectory_return(mdp, item.trajectory);
  }

  const ValueVector target = vector_value(mdp, policy);
  report.value_error = (represented - target).lpNorm<Eigen::Infinity>();
  if (!report.support || report.value_error > 1e-8) {
    report.value = false;
    std::ostringstream msg;
    msg << "weighted return differs from the policy value by " << report.value_error;
    report.failures.push_back(msg.str());
  }
  return report;
}

SetValidation validate_set(const Momdp& mdp, const Policy& policy,
                           const WeightedTrajectorySet& set) {
  return validate_set(mdp, MixturePolicy(policy), set);
}

json trajectory_set_to_json(const Momdp& mdp, const WeightedTrajectorySet& set) {
  json items = json::array();
  for (const auto& item : set.items) {
    json steps = json::array();
    const auto& tr = item.trajectory;
    for (std::size_t t = 0; t < tr.actions.size(); ++t)
      steps.push_back({{"state", mdp.state_name(tr.states[t])}, {"action", mdp.action_name(tr.actions[t])}});
    steps.push_back({{"state", mdp.state_name(tr.states.back())}});
    items.push_back({{"weight", item.weight},
                     {"steps", std::move(steps)},
                     {"return", vector_to_json(trajectory_return(mdp, tr))}});
  }
  return {{"policy", set.policy_digest},
          {"items", std::move(items)},
          {"value", vector_to_json(set.represented_value(mdp))}};
}

WeightedTrajectorySet trajectory_set_from_json(const Momdp& mdp, const json& doc) {
  WeightedTrajectorySet set;
  try {
    set.policy_digest = doc.value("policy", std::string());
    for (const auto& item : doc.at("items")) {
      WeightedTrajectory wt;
      wt.weight = item.at("weight").get<double>();
      const auto& steps = item.at("steps");
      for (std::size_t t = 0; t < steps.size(); ++t) {
        auto s = mdp.find_state(steps[t].at("state").get<std::string>());
        if (!s) throw ValidationError("items.steps.state", "unknown state");
        wt.trajectory.states.push_back(*s);
        if (t + 1 < steps.size()) {
          auto a = mdp.find_action(steps[t].at("action").get<std::string>());
          if (!a) throw ValidationError("items.steps.action", "unknown action");
          wt.trajectory.actions.push_back(*a);
        }
      }
      set.items.push_back(std::move(wt));
    }
  } catch (const json::exception& e) {
    throw ValidationError("trajectory_set", e.what());
  }
  return set;
}

}  // namespace mopref
