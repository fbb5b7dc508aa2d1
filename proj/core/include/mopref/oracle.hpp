#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mopref/momdp.hpp"
#include "mopref/trajectory.hpp"

namespace mopref {

enum class Verdict { PreferLeft, PreferRight, Indistinguishable };
enum class Phase { Benchmark, Ratio, Precision };
enum class Representation { Explicit, TrajectorySet };

/// "left" | "right" | "indistinguishable"
std::string_view to_string(Verdict verdict);
std::optional<Verdict> parse_verdict(std::string_view text);
std::string_view to_string(Phase phase);
std::optional<Phase> parse_phase(std::string_view text);
std::string_view to_string(Representation representation);
std::optional<Representation> parse_representation(std::string_view text);

/// Current UTC time as "YYYY-MM-DDTHH:MM:SS.mmmZ".
std::string utc_timestamp();

/// User with a hidden linear preference who answers on exact values:
/// left if <w, L - R> > eps, right if < -eps, otherwise indistinguishable.
class SimulatedUser {
 public:
  /// Requires nonnegative finite weights with 1 <= |w|_2 <= norm_bound and
  /// precision >= 0. norm_bound defaults to |w|_2.
  SimulatedUser(Eigen::VectorXd preference, double precision,
                std::optional<double> norm_bound = std::nullopt);

  Verdict answer(const ValueVector& left, const ValueVector& right);

  double personalized_value(const ValueVector& value) const { return preference_.dot(value); }
  const Eigen::VectorXd& preference() const noexcept { return preference_; }
  double precision() const noexcept { return precision_; }
  double norm_bound() const noexcept { return norm_bound_; }
  std::size_t queries_answered() const noexcept { return answered_; }

 private:
  Eigen::VectorXd preference_;
  double precision_;
  double norm_bound_;
  std::size_t answered_ = 0;
};

/// One side of a comparison: the policy, the value a rational user would
/// perceive, and the trajectory set shown to a human when requested.
struct QueryOperand {
  MixturePolicy policy;
  ValueVector value;
  std::optional<WeightedTrajectorySet> trajectories;
};

struct ComparisonRequest {
  Phase phase;
  MixturePolicy left;
  MixturePolicy right;
};

struct ComparisonQuery {
  std::string query_id;
  Phase phase;
  QueryOperand left;
  QueryOperand right;
};

struct TranscriptRecord {
  std::string query_id;
  Phase phase;
  ValueVector left_value;
  ValueVector right_value;
  std::optional<Verdict> verdict;
  std::string timestamp;
};

class OracleError : public std::runtime_error {
 public:
  enum class Code { AlreadyPending, BudgetExhausted, UnknownQuery, NotPending };

  OracleError(Code code, const std::string& message) : std::runtime_error(message), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

/// Query/answer exchange with at most one outstanding query. The transcript
/// is append-only: posting adds an unanswered record, answering completes it.
class OracleSession {
 public:
  explicit OracleSession(std::optional<std::size_t> budget = std::nullopt) : budget_(budget) {}

  /// Throws AlreadyPending or BudgetExhausted.
  void post_query(ComparisonQuery query);
  /// Throws NotPending or UnknownQuery.
  void receive_answer(const std::string& query_id, Verdict verdict);

  bool awaiting() const noexcept { return pending_.has_value(); }
  const ComparisonQuery* pending() const noexcept { return pending_ ? &*pending_ : nullptr; }
  const std::vector<TranscriptRecord>& transcript() const noexcept { return transcript_; }
  std::size_t answered() const noexcept;
  std::optional<std::size_t> budget() const noexcept { return budget_; }
  /// Sequential id for the next query: "q0001", "q0002", ...
  std::string next_query_id() const;

 private:
  std::optional<std::size_t> budget_;
  std::optional<ComparisonQuery> pending_;
  std::vector<TranscriptRecord> transcript_;
};

/// JSON-lines transcript: one object per record.
nlohmann::json transcript_record_to_json(const TranscriptRecord& record);
TranscriptRecord transcript_record_from_json(const nlohmann::json& line);
void write_transcript(std::ostream& out, const std::vector<TranscriptRecord>& transcript);
std::vector<TranscriptRecord> read_transcript(std::istream& in);

/// Source of verdicts for queries posted to a session.
class Responder {
 public:
  virtual ~Responder() = default;
  virtual Verdict respond(const ComparisonQuery& query) = 0;
};

class SimulatedResponder final : public Responder {
 public:
  explicit SimulatedResponder(SimulatedUser& user) : user_(&user) {}
  Verdict respond(const ComparisonQuery& query) override {
    return user_->answer(query.left.value, query.right.value);
  }

 private:
  SimulatedUser* user_;
};

/// Replays a fixed verdict sequence; throws std::out_of_range when exhausted.
class ScriptedResponder final : public Responder {
 public:
  explicit ScriptedResponder(std::vector<Verdict> script) : script_(std::move(script)) {}
  Verdict respond(const ComparisonQuery& query) override;
  std::size_t consumed() const noexcept { return next_; }

 private:
  std::vector<Verdict> script_;
  std::size_t next_ = 0;
};

/// Turns policy-level requests into presentable queries, caching per-policy
/// values and trajectory sets.
class QueryBuilder {
 public:
  QueryBuilder(const Momdp& mdp, Representation representation)
      : mdp_(&mdp), representation_(representation) {}

  ComparisonQuery build(const ComparisonRequest& request, std::string query_id);
  Representation representation() const noexcept { return representation_; }

 private:
  QueryOperand operand(const MixturePolicy& policy);
  const WeightedTrajectorySet& component_set(const Policy& policy);
  const ValueVector& component_value(const Policy& policy);

  const Momdp* mdp_;
  Representation representation_;
  std::map<std::string, WeightedTrajectorySet> sets_;
  std::map<std::string, ValueVector> values_;
};

/// Synchronous comparisons: build, post, ask the responder, record.
class ComparisonChannel {
 public:
  ComparisonChannel(const Momdp& mdp, OracleSession& session, Responder& responder,
                    Representation representation = Representation::Explicit)
      : session_(&session), responder_(&responder), builder_(mdp, representation) {}

  Verdict compare(const ComparisonRequest& request);
  OracleSession& session() noexcept { return *session_; }

 private:
  OracleSession* session_;
  Responder* responder_;
  QueryBuilder builder_;
};

}  // namespace mopref
