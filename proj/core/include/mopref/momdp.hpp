#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mopref {

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

/// k-dimensional expected return of a policy or trajectory.
using ValueVector = Eigen::VectorXd;
/// Scalarization weights; components may take any sign.
using Direction = Eigen::VectorXd;

/// Raised when an instance or policy violates a model constraint. `field()`
/// names the offending entry, e.g. "transitions.s1.a2".
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& message);

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct Successor {
  StateIndex state;
  double probability;
};

/// Unvalidated description of an instance. Transition rows and reward vectors
/// are indexed [state][action]; entries for unavailable pairs are ignored.
struct MomdpDescription {
  std::vector<std::string> states;
  std::vector<std::string> actions;
  std::vector<std::vector<ActionIndex>> available;
  StateIndex initial_state = 0;
  StateIndex do_nothing_state = 0;
  ActionIndex do_nothing_action = 0;
  int horizon = 0;
  int objectives = 0;
  std::vector<std::vector<std::vector<double>>> transitions;
  std::vector<std::vector<std::vector<double>>> rewards;
};

/// Known finite-horizon multi-objective MDP. Immutable once constructed.
///
/// Invariants checked at construction: every transition row of an available
/// pair is a probability distribution (sum 1 within 1e-9, no negatives),
/// every reward component lies in [0,1], and the do-nothing pair is a
/// zero-reward self loop on the initial state that is available nowhere else.
class Momdp {
 public:
  static constexpr double kTransitionTolerance = 1e-9;

  /// Throws ValidationError naming the offending field.
  explicit Momdp(MomdpDescription description);

  std::size_t num_states() const noexcept { return states_.size(); }
  std::size_t num_actions() const noexcept { return actions_.size(); }
  int horizon() const noexcept { return horizon_; }
  int objectives() const noexcept { return objectives_; }

  const std::string& state_name(StateIndex s) const { return states_.at(s); }
  const std::string& action_name(ActionIndex a) const { return actions_.at(a); }
  std::optional<StateIndex> find_state(const std::string& name) const;
  std::optional<ActionIndex> find_action(const std::string& name) const;

  StateIndex initial_state() const noexcept { return initial_state_; }
  StateIndex do_nothing_state() const noexcept { return initial_state_; }
  ActionIndex do_nothing_action() const noexcept { return do_nothing_action_; }

  /// Available actions at `s`, ascending.
  std::span<const ActionIndex> available(StateIndex s) const { return available_.at(s); }
  bool is_available(StateIndex s, ActionIndex a) const;

  /// Dense row P(. | s, a); empty for unavailable pairs.
  std::span<const double> transition(StateIndex s, ActionIndex a) const;
  /// States with positive probability under (s, a), ascending.
  std::span<const Successor> successors(StateIndex s, ActionIndex a) const;
  const ValueVector& reward(StateIndex s, ActionIndex a) const;

  /// C_V = sqrt(k) * H, the bound on the Euclidean norm of any policy value.
  double value_norm_bound() const noexcept;

 private:
  std::size_t pair(StateIndex s, ActionIndex a) const { return s * actions_.size() + a; }

  std::vector<std::string> states_;
  std::vector<std::string> actions_;
  std::vector<std::vector<ActionIndex>> available_;
  StateIndex initial_state_ = 0;
  ActionIndex do_nothing_action_ = 0;
  int horizon_ = 0;
  int objectives_ = 0;
  std::vector<std::vector<double>> transitions_;
  std::vector<std::vector<Successor>> successors_;
  std::vector<ValueVector> rewards_;
};

/// Time-indexed deterministic policy: one action per (step, state).
class Policy {
 public:
  Policy() = default;
  Policy(int horizon, std::size_t num_states, std::vector<ActionIndex> table);

  int horizon() const noexcept { return horizon_; }
  std::size_t num_states() const noexcept { return num_states_; }
  ActionIndex action(int step, StateIndex s) const {
    return table_[static_cast<std::size_t>(step) * num_states_ + s];
  }
  void set_action(int step, StateIndex s, ActionIndex a) {
    table_[static_cast<std::size_t>(step) * num_states_ + s] = a;
  }
  const std::vector<ActionIndex>& table() const noexcept { return table_; }

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  int horizon_ = 0;
  std::size_t num_states_ = 0;
  std::vector<ActionIndex> table_;
};

/// Throws ValidationError if `policy` has the wrong shape or assigns an
/// unavailable action.
void check_policy(const Momdp& mdp, const Policy& policy);

/// The do-nothing action at the initial state; lowest available action at
/// every other state (those are never reached).
Policy do_nothing_policy(const Momdp& mdp);

/// Policy that plays the lowest available action everywhere.
Policy lowest_index_policy(const Momdp& mdp);

/// Convex combination of deterministic policies: one component is drawn
/// once at the start of an episode and followed throughout.
class MixturePolicy {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  struct Component {
    double weight;
    Policy policy;
  };

  MixturePolicy() = default;
  explicit MixturePolicy(std::vector<Component> components);
  /// Single-component mixture.
  explicit MixturePolicy(Policy policy);

  const std::vector<Component>& components() const noexcept { return components_; }

 private:
  std::vector<Component> components_;
};

/// s_0, a_0, ..., s_{H-1}, a_{H-1}, s_H stored as H+1 states and H actions.
struct Trajectory {
  std::vector<StateIndex> states;
  std::vector<ActionIndex> actions;

  std::size_t length() const noexcept { return actions.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
  friend auto operator<=>(const Trajectory&, const Trajectory&) = default;
};

struct PlanResult {
  Policy policy;
  double value = 0.0;
};

/// Backward induction on the scalar reward <direction, R>. Ties go to the
/// lowest action index at each (step, state).
PlanResult scalarized_plan(const Momdp& mdp, const Direction& direction);

/// Exact expected k-dimensional return from the initial state.
ValueVector vector_value(const Momdp& mdp, const Policy& policy);
ValueVector vector_value(const Momdp& mdp, const MixturePolicy& mixture);

/// Component-wise reward sum. Throws ValidationError on invalid references.
ValueVector trajectory_return(const Momdp& mdp, const Trajectory& trajectory);

/// q^pi(tau): zero when the trajectory leaves the policy's support.
double trajectory_probability(const Momdp& mdp, const Policy& policy,
                              const Trajectory& trajectory);
double trajectory_probability(const Momdp& mdp, const MixturePolicy& mixture,
                              const Trajectory& trajectory);

/// Number of time-indexed deterministic policies, saturating at UINT64_MAX.
std::uint64_t policy_count(const Momdp& mdp);

class PolicyLimitExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Yields every time-indexed deterministic policy exactly once, in
/// lexicographic order of the (step, state) table over available actions.
class PolicyEnumerator {
 public:
  /// Throws PolicyLimitExceeded when there are more than `limit` policies.
  PolicyEnumerator(const Momdp& mdp, std::uint64_t limit);

  std::optional<Policy> next();
  std::uint64_t size() const noexcept { return total_; }

 private:
  const Momdp* mdp_;
  std::vector<std::size_t> digits_;
  std::vector<std::size_t> radix_;
  std::uint64_t total_ = 0;
  bool exhausted_ = false;
};

}  // namespace mopref
