#include "mopref/oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>

#include "mopref/io.hpp"

namespace mopref {

using nlohmann::json;

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::PreferLeft: return "left";
    case Verdict::PreferRight: return "right";
    case Verdict::Indistinguishable: return "indistinguishable";
  }
  return "indistinguishable";
}

std::optional<Verdict> parse_verdict(std::string_view text) {
  if (text == "left") return Verdict::PreferLeft;
  if (text == "right") return Verdict::PreferRight;
  if (text == "indistinguishable") return Verdict::Indistinguishable;
  return std::nullopt;
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Benchmark: return "benchmark";
    case Phase::Ratio: return "ratio";
    case Phase::Precision: return "precision";
  }
  return "benchmark";
}

std::optional<Phase> parse_phase(std::string_view text) {
  if (text == "benchmark") return Phase::Benchmark;
  if (text == "ratio") return Phase::Ratio;
  if (text == "precision") return Phase::Precision;
  return std::nullopt;
}

std::string_view to_string(Representation representation) {
  return representation == Representation::Explicit ? "explicit" : "trajset";
}

std::optional<Representation> parse_representation(std::string_view text) {
  if (text == "explicit") return Representation::Explicit;
  if (text == "trajset" || text == "trajectory_set") return Representation::TrajectorySet;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

SimulatedUser::SimulatedUser(Eigen::VectorXd preference, double precision,
                             std::optional<double> norm_bound)
    : preference_(std::move(preference)), precision_(precision) {
  if (preference_.size() == 0) throw std::invalid_argument("preference must be nonempty");
  for (Eigen::Index i = 0; i < preference_.size(); ++i)
    if (!std::isfinite(preference_(i)) || preference_(i) < 0.0)
      throw std::invalid_argument("preference components must be finite and nonnegative");
  if (!std::isfinite(precision) || precision < 0.0)
    throw std::invalid_argument("precision must be finite and nonnegative");
  const double norm = preference_.norm();
  norm_bound_ = norm_bound.value_or(std::max(1.0, norm));
  if (norm < 1.0 - 1e-12 || norm > norm_bound_ * (1.0 + 1e-12))
    throw std::invalid_argument("preference norm must lie in [1, C_w]");
}

Verdict SimulatedUser::answer(const ValueVector& left, const ValueVector& right) {
  if (left.size() != preference_.size() || right.size() != preference_.size())
    throw std::invalid_argument("value vectors must have dimension k");
  ++answered_;
  const double gap = preference_.dot(left - right);
  if (gap > precision_) return Verdict::PreferLeft;
  if (gap < -precision_) return Verdict::PreferRight;
  return Verdict::Indistinguishable;
}

// ---------------------------------------------------------------------------

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t seconds = std::chrono::system_clock::to_time_t(now);
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&seconds, &tm);
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(millis));
  return buffer;
}

void OracleSession::post_query(ComparisonQuery query) {
  if (pending_)
    throw OracleError(OracleError::Code::AlreadyPending,
                      "query " + pending_->query_id + " is still awaiting an answer");
  if (budget_ && answered() >= *budget_)
    throw OracleError(OracleError::Code::BudgetExhausted,
                      "query budget of " + std::to_string(*budget_) + " exhausted");
  transcript_.push_back(
      {query.query_id, query.phase, query.left.value, query.right.value, std::nullopt, {}});
  pending_ = std::move(query);
}

void OracleSession::receive_answer(const std::string& query_id, Verdict verdict) {
  if (!pending_) throw OracleError(OracleError::Code::NotPending, "no query is pending");
  if (query_id != pending_->query_id)
    throw OracleError(OracleError::Code::UnknownQuery,
                      "answer for '" + query_id + "' but '" + pending_->query_id + "' is pending");
  TranscriptRecord& record = transcript_.back();
  record.verdict = verdict;
  record.timestamp = utc_timestamp();
  pending_.reset();
}

std::size_t OracleSession::answered() const noexcept {
  return pending_ ? transcript_.size() - 1 : transcript_.size();
}

std::string OracleSession::next_query_id() const {
  char buffer[24];
  std::snprintf(buffer, sizeof buffer, "q%04zu", transcript_.size() + 1);
  return buffer;
}

json transcript_record_to_json(const TranscriptRecord& record) {
  json line = {{"query_id", record.query_id},
               {"phase", to_string(record.phase)},
               {"left", vector_to_json(record.left_value)},
               {"right", vector_to_json(record.right_value)},
               {"timestamp", record.timestamp}};
  line["verdict"] = record.verdict ? json(to_string(*record.verdict)) : json(nullptr);
  return line;
}

TranscriptRecord transcript_record_from_json(const json& line) {
  TranscriptRecord record;
  try {
    record.query_id = line.at("query_id").get<std::string>();
    auto phase = parse_phase(line.at("phase").get<std::string>());
    if (!phase) throw ValidationError("phase", "unknown phase");
    record.phase = *phase;
    record.left_value = vector_from_json(line.at("left"));
    record.right_value = vector_from_json(line.at("right"));
    if (!line.at("verdict").is_null()) {
      auto verdict = parse_verdict(line.at("verdict").get<std::string>());
      if (!verdict) throw ValidationError("verdict", "unknown verdict");
      record.verdict = *verdict;
    }
    record.timestamp = line.value("timestamp", std::string());
  } catch (const json::exception& e) {
    throw ValidationError("transcript", e.what());
  }
  return record;
}

void write_transcript(std::ostream& out, const std::vector<TranscriptRecord>& transcript) {
  for (const auto& record : transcript) out << transcript_record_to_json(record).dump() << '\n';
}

std::vector<TranscriptRecord> read_transcript(std::istream& in) {
  std::vector<TranscriptRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(transcript_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ValidationError("transcript", e.what());
    }
  }
  return records;
}

Verdict ScriptedResponder::respond(const ComparisonQuery&) {
  if (next_ >= script_.size()) throw std::out_of_range("scripted verdicts exhausted");
  return script_[next_++];
}

// ---------------------------------------------------------------------------

const ValueVector& QueryBuilder::component_value(const Policy& policy) {
  const std::string key = policy_digest(policy);
  auto it = values_.find(key);
  if (it == values_.end()) it = values_.emplace(key, vector_value(*mdp_, policy)).first;
  return it->second;
}

const WeightedTrajectorySet& QueryBuilder::component_set(const Policy& policy) {
  const std::string key = policy_digest(policy);
  auto it = sets_.find(key);
  if (it == sets_.end()) it = sets_.emplace(key, expand_compress(*mdp_, policy)).first;
  return it->second;
}

QueryOperand QueryBuilder::operand(const MixturePolicy& policy) {
  QueryOperand out{policy, ValueVector::Zero(mdp_->objectives()), std::nullopt};
  if (representation_ == Representation::Explicit) {
    for (const auto& c : policy.components()) out.value += c.weight * component_value(c.policy);
    return out;
  }
  std::vector<WeightedTrajectorySet> parts;
  parts.reserve(policy.components().size());
  for (const auto& c : policy.components()) parts.push_back(component_set(c.policy));
  out.trajectories = represent_mixture(*mdp_, policy, parts);
  // A human sees the trajectory set; the perceived value is its weighted return.
  out.value = out.trajectories->represented_value(*mdp_);
  return out;
}

ComparisonQuery QueryBuilder::build(const ComparisonRequest& request, std::string query_id) {
  return {std::move(query_id), request.phase, operand(request.left), operand(request.right)};
}

Verdict ComparisonChannel::compare(const ComparisonRequest& request) {
  ComparisonQuery query = builder_.build(request, session_->next_query_id());
  const std::string id = query.query_id;
  session_->post_query(std::move(query));
  const Verdict verdict = responder_->respond(*session_->pending());
  session_->receive_answer(id, verdict);
  return verdict;
}

}  // namespace mopref
