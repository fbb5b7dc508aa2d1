#include "mopref/momdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mopref {

ValidationError::ValidationError(std::string field, const std::string& message)
    : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

namespace {

std::string pair_field(const std::string& prefix, const MomdpDescription& d, StateIndex s,
                       ActionIndex a) {
  return prefix + "." + d.states[s] + "." + d.actions[a];
}

}  // namespace

Momdp::Momdp(MomdpDescription d) {
  if (d.horizon <= 0) throw ValidationError("horizon", "must be a positive integer");
  if (d.objectives <= 0) throw ValidationError("k", "must be a positive integer");
  if (d.states.empty()) throw ValidationError("states", "must not be empty");
  if (d.actions.empty()) throw ValidationError("actions", "must not be empty");

  const std::size_t ns = d.states.size();
  const std::size_t na = d.actions.size();
  const auto k = static_cast<Eigen::Index>(d.objectives);

  auto check_unique = [](const std::vector<std::string>& names, const char* field) {
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw ValidationError(field, "duplicate id '" + *dup + "'");
  };
  check_unique(d.states, "states");
  check_unique(d.actions, "actions");

  if (d.initial_state >= ns) throw ValidationError("initial_state", "unknown state");
  if (d.do_nothing_state >= ns) throw ValidationError("do_nothing.state", "unknown state");
  if (d.do_nothing_action >= na) throw ValidationError("do_nothing.action", "unknown action");
  if (d.do_nothing_state != d.initial_state)
    throw ValidationError("do_nothing.state", "must be the initial state");
  if (d.available.size() != ns)
    throw ValidationError("available_actions", "one entry per state required");
  if (d.transitions.size() != ns) throw ValidationError("transitions", "one entry per state required");
  if (d.rewards.size() != ns) throw ValidationError("rewards", "one entry per state required");

  available_.resize(ns);
  for (StateIndex s = 0; s < ns; ++s) {
    auto acts = d.available[s];
    std::sort(acts.begin(), acts.end());
    acts.erase(std::unique(acts.begin(), acts.end()), acts.end());
    const std::string field = "available_actions." + d.states[s];
    if (acts.empty()) throw ValidationError(field, "state has no available action");
    for (ActionIndex a : acts)
      if (a >= na) throw ValidationError(field, "unknown action");
    const bool has_noop =
        std::binary_search(acts.begin(), acts.end(), d.do_nothing_action);
    if (s == d.do_nothing_state && !has_noop)
      throw ValidationError(field, "do-nothing action must be available at its state");
    if (s != d.do_nothing_state && has_noop)
      throw ValidationError(field, "do-nothing action is only available at the initial state");
    available_[s] = std::move(acts);
  }

  transitions_.assign(ns * na, {});
  successors_.assign(ns * na, {});
  rewards_.assign(ns * na, ValueVector());
  for (StateIndex s = 0; s < ns; ++s) {
    if (d.transitions[s].size() != na || d.rewards[s].size() != na)
      throw ValidationError("transitions." + d.states[s], "one entry per action required");
    for (ActionIndex a : available_[s]) {
      const auto& row = d.transitions[s][a];
      const std::string tfield = pair_field("transitions", d, s, a);
      if (row.size() != ns) throw ValidationError(tfield, "missing transition row");
      double mass = 0.0;
      for (StateIndex t = 0; t < ns; ++t) {
        if (!std::isfinite(row[t]) || row[t] < 0.0)
          throw ValidationError(tfield + "." + d.states[t], "negative or non-finite probability");
        mass += row[t];
      }
      if (std::abs(mass - 1.0) > kTransitionTolerance) {
        std::ostringstream msg;
        msg << "transition mass " << mass << " does not sum to 1";
        throw ValidationError(tfield, msg.str());
      }

      const auto& r = d.rewards[s][a];
      const std::string rfield = pair_field("rewards", d, s, a);
      if (static_cast<Eigen::Index>(r.size()) != k)
        throw ValidationError(rfield, "reward must have k components");
      ValueVector reward(k);
      for (Eigen::Index j = 0; j < k; ++j) {
        const double v = r[static_cast<std::size_t>(j)];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
          std::ostringstream msg;
          msg << "reward range violated: component " << j << " = " << v << " not in [0,1]";
          throw ValidationError(rfield, msg.str());
        }
        reward(j) = v;
      }

      if (s == d.do_nothing_state && a == d.do_nothing_action) {
        if (row[s] != 1.0)
          throw ValidationError(tfield, "do-nothing action must self-loop with probability 1");
        if (!reward.isZero(0.0))
          throw ValidationError(rfield, "do-nothing action must have zero reward");
      }

      const std::size_t p = s * na + a;
      transitions_[p] = row;
      for (StateIndex t = 0; t < ns; ++t)
        if (row[t] > 0.0) successors_[p].push_back({t, row[t]});
      rewards_[p] = std::move(reward);
    }
  }

  states_ = std::move(d.states);
  actions_ = std::move(d.actions);
  initial_state_ = d.initial_state;
  do_nothing_action_ = d.do_nothing_action;
  horizon_ = d.horizon;
  objectives_ = d.objectives;
}

std::optional<StateIndex> Momdp::find_state(const std::string& name) const {
  auto it = std::find(states_.begin(), states_.end(), name);
  if (it == states_.end()) return std::nullopt;
  return static_cast<StateIndex>(it - states_.begin());
}

std::optional<ActionIndex> Momdp::find_action(const std::string& name) const {
  auto it = std::find(actions_.begin(), actions_.end(), name);
  if (it == actions_.end()) return std::nullopt;
  return static_cast<ActionIndex>(it - actions_.begin());
}

bool Momdp::is_available(StateIndex s, ActionIndex a) const {
  if (s >= states_.size()) return false;
  return std::binary_search(available_[s].begin(), available_[s].end(), a);
}

std::span<const double> Momdp::transition(StateIndex s, ActionIndex a) const {
  return transitions_.at(pair(s, a));
}

std::span<const Successor> Momdp::successors(StateIndex s, ActionIndex a) const {
  return successors_.at(pair(s, a));
}

const ValueVector& Momdp::reward(StateIndex s, ActionIndex a) const {
  if (!is_available(s, a))
    throw ValidationError("rewards", "pair (" + std::to_string(s) + ", " + std::to_string(a) +
                                         ") is not available");
  return rewards_[pair(s, a)];
}

double Momdp::value_norm_bound() const noexcept {
  return std::sqrt(static_cast<double>(objectives_)) * horizon_;
}

// ---------------------------------------------------------------------------

Policy::Policy(int horizon, std::size_t num_states, std::vector<ActionIndex> table)
    : horizon_(horizon), num_states_(num_states), table_(std::move(table)) {
  if (horizon < 0 || table_.size() != static_cast<std::size_t>(horizon) * num_states)
    throw ValidationError("policy", "table size must equal horizon * |S|");
}

void check_policy(const Momdp& mdp, const Policy& policy) {
  if (policy.horizon() != mdp.horizon() || policy.num_states() != mdp.num_states())
    throw ValidationError("policy", "shape does not match the instance");
  for (int h = 0; h < mdp.horizon(); ++h)
    for (StateIndex s = 0; s < mdp.num_states(); ++s)
      if (!mdp.is_available(s, policy.action(h, s)))
        throw ValidationError("policy." + std::to_string(h) + "." + mdp.state_name(s),
                              "action not available");
}

Policy lowest_index_policy(const Momdp& mdp) {
  std::vector<ActionIndex> table;
  table.reserve(static_cast<std::size_t>(mdp.horizon()) * mdp.num_states());
  for (int h = 0; h < mdp.horizon(); ++h)
    for (StateIndex s = 0; s < mdp.num_states(); ++s) table.push_back(mdp.available(s).front());
  return Policy(mdp.horizon(), mdp.num_states(), std::move(table));
}

Policy do_nothing_policy(const Momdp& mdp) {
  Policy policy = lowest_index_policy(mdp);
  for (int h = 0; h < mdp.horizon(); ++h)
    policy.set_action(h, mdp.do_nothing_state(), mdp.do_nothing_action());
  return policy;
}

MixturePolicy::MixturePolicy(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ValidationError("mixture", "needs at least one component");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0)) throw ValidationError("mixture.weight", "weights must be nonnegative");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > kWeightTolerance)
    throw ValidationError("mixture.weight", "weights must sum to 1");
}

MixturePolicy::MixturePolicy(Policy policy) : components_{{1.0, std::move(policy)}} {}

// ---------------------------------------------------------------------------

PlanResult scalarized_plan(const Momdp& mdp, const Direction& direction) {
  const std::size_t ns = mdp.num_states();
  const int horizon = mdp.horizon();
  if (direction.size() != mdp.objectives())
    throw ValidationError("direction", "dimension must equal k");

  std::vector<double> next(ns, 0.0);
  std::vector<double> current(ns, 0.0);
  std::vector<ActionIndex> table(static_cast<std::size_t>(horizon) * ns, 0);
  for (int h = horizon - 1; h >= 0; --h) {
    for (StateIndex s = 0; s < ns; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      ActionIndex best_action = 0;
      for (ActionIndex a : mdp.available(s)) {
        double q = direction.dot(mdp.reward(s, a));
        for (const Successor& nxt : mdp.successors(s, a)) q += nxt.probability * next[nxt.state];
        if (q > best) {
          best = q;
          best_action = a;
        }
      }
      current[s] = best;
      table[static_cast<std::size_t>(h) * ns + s] = best_action;
    }
    std::swap(current, next);
  }
  return {Policy(horizon, ns, std::move(table)), next[mdp.initial_state()]};
}

ValueVector vector_value(const Momdp& mdp, const Policy& policy) {
  check_policy(mdp, policy);
  const std::size_t ns = mdp.num_states();
  const Eigen::Index k = mdp.objectives();
  std::vector<ValueVector> next(ns, ValueVector::Zero(k));
  std::vector<ValueVector> current(ns, ValueVector::Zero(k));
  for (int h = mdp.horizon() - 1; h >= 0; --h) {
    for (StateIndex s = 0; s < ns; ++s) {
      const ActionIndex a = policy.action(h, s);
      ValueVector v = mdp.reward(s, a);
      for (const Successor& nxt : mdp.successors(s, a)) v += nxt.probability * next[nxt.state];
      current[s] = std::move(v);
    }
    std::swap(current, next);
  }
  return next[mdp.initial_state()];
}

ValueVector vector_value(const Momdp& mdp, const MixturePolicy& mixture) {
  ValueVector total = ValueVector::Zero(mdp.objectives());
  for (const auto& c : mixture.components()) total += c.weight * vector_value(mdp, c.policy);
  return total;
}

namespace {

void check_trajectory(const Momdp& mdp, const Trajectory& trajectory) {
  if (trajectory.states.size() != trajectory.actions.size() + 1)
    throw ValidationError("trajectory", "needs exactly one more state than actions");
  for (StateIndex s : trajectory.states)
    if (s >= mdp.num_states()) throw ValidationError("trajectory.state", "unknown state");
  for (ActionIndex a : trajectory.actions)
    if (a >= mdp.num_actions()) throw ValidationError("trajectory.action", "unknown action");
}

}  // namespace

ValueVector trajectory_return(const Momdp& mdp, const Trajectory& trajectory) {
  check_trajectory(mdp, trajectory);
  ValueVector total = ValueVector::Zero(mdp.objectives());
  for (std::size_t t = 0; t < trajectory.actions.size(); ++t)
    total += mdp.reward(trajectory.states[t], trajectory.actions[t]);
  return total;
}

double trajectory_probability(const Momdp& mdp, const Policy& policy,
                              const Trajectory& trajectory) {
  check_trajectory(mdp, trajectory);
  if (static_cast<int>(trajectory.length()) != mdp.horizon() ||
      trajectory.states.front() != mdp.initial_state())
    return 0.0;
  double probability = 1.0;
  for (std::size_t t = 0; t < trajectory.actions.size(); ++t) {
    const StateIndex s = trajectory.states[t];
    const ActionIndex a = trajectory.actions[t];
    if (policy.action(static_cast<int>(t), s) != a) return 0.0;
    probability *= mdp.transition(s, a)[trajectory.states[t + 1]];
  }
  return probability;
}

double trajectory_probability(const Momdp& mdp, const MixturePolicy& mixture,
                              const Trajectory& trajectory) {
  double total = 0.0;
  for (const auto& c : mixture.components())
    total += c.weight * trajectory_probability(mdp, c.policy, trajectory);
  return total;
}

std::uint64_t policy_count(const Momdp& mdp) {
  std::uint64_t total = 1;
  for (int h = 0; h < mdp.horizon(); ++h) {
    for (StateIndex s = 0; s < mdp.num_states(); ++s) {
      const std::uint64_t n = mdp.available(s).size();
      if (total > std::numeric_limits<std::uint64_t>::max() / n)
        return std::numeric_limits<std::uint64_t>::max();
      total *= n;
    }
  }
  return total;
}

PolicyEnumerator::PolicyEnumerator(const Momdp& mdp, std::uint64_t limit) : mdp_(&mdp) {
  total_ = policy_count(mdp);
  if (total_ > limit)
    throw PolicyLimitExceeded("instance has " + std::to_string(total_) +
                              " policies, more than the limit " + std::to_string(limit));
  const std::size_t cells = static_cast<std::size_t>(mdp.horizon()) * mdp.num_states();
  digits_.assign(cells, 0);
  radix_.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) radix_[c] = mdp.available(c % mdp.num_states()).size();
}

std::optional<Policy> PolicyEnumerator::next() {
  if (exhausted_) return std::nullopt;
  const std::size_t ns = mdp_->num_states();
  std::vector<ActionIndex> table(digits_.size());
  for (std::size_t c = 0; c < digits_.size(); ++c) table[c] = mdp_->available(c % ns)[digits_[c]];
  Policy policy(mdp_->horizon(), ns, std::move(table));

  // Odometer increment, last cell fastest.
  std::size_t c = digits_.size();
  while (c > 0) {
    --c;
    if (++digits_[c] < radix_[c]) return policy;
    digits_[c] = 0;
  }
  exhausted_ = true;
  return policy;
}

}  // namespace mopref
