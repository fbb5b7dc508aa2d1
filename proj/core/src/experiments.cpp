#include "mopref/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "mopref/io.hpp"
#include "mopref/trajectory.hpp"

namespace mopref {

using nlohmann::json;

namespace {

/// Uniform on [0, 1) from the top 53 bits; stable across standard libraries.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int draw(std::mt19937_64& rng, const DimRange& range) {
  const auto span = static_cast<std::uint64_t>(range.high - range.low + 1);
  return range.low + static_cast<int>(rng() % span);
}

}  // namespace

GeneratedInstance generate_instance(std::uint64_t seed, const InstanceDims& dims) {
  if (dims.states < 1 || dims.actions < 1 || dims.horizon < 1 || dims.objectives < 1)
    throw std::invalid_argument("instance dimensions must be positive");
  std::mt19937_64 rng(seed);
  const auto S = static_cast<std::size_t>(dims.states);
  const auto A = static_cast<std::size_t>(dims.actions) + 1;
  const auto k = static_cast<std::size_t>(dims.objectives);

  MomdpDescription d;
  for (std::size_t s = 0; s < S; ++s) d.states.push_back("s" + std::to_string(s));
  for (std::size_t a = 0; a < A; ++a) d.actions.push_back("a" + std::to_string(a));
  d.horizon = dims.horizon;
  d.objectives = dims.objectives;
  d.available.resize(S);
  d.transitions.assign(S, std::vector<std::vector<double>>(A, std::vector<double>(S, 0.0)));
  d.rewards.assign(S, std::vector<std::vector<double>>(A, std::vector<double>(k, 0.0)));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = (s == 0 ? 0 : 1); a < A; ++a) d.available[s].push_back(a);
    for (std::size_t a = 1; a < A; ++a) {
      auto& row = d.transitions[s][a];
      double total = 0.0;
      for (auto& p : row) total += p = 1.0 - unit(rng);  // in (0, 1]
      for (auto& p : row) p /= total;
      for (auto& r : d.rewards[s][a]) r = unit(rng);
    }
  }
  d.transitions[0][0][0] = 1.0;

  Eigen::VectorXd w(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = 1.0 - unit(rng);
  w *= (1.0 + unit(rng)) / w.norm();
  return {Momdp(std::move(d)), std::move(w)};
}

// ---------------------------------------------------------------------------

namespace {

DimRange read_range(const json& doc, const char* key, DimRange fallback) {
  if (!doc.contains(key)) return fallback;
  const json& v = doc[key];
  DimRange r;
  if (v.is_number_integer()) {
    r.low = r.high = v.get<int>();
  } else if (v.is_array() && v.size() == 2 && v[0].is_number_integer() &&
             v[1].is_number_integer()) {
    r.low = v[0].get<int>();
    r.high = v[1].get<int>();
  } else {
    throw ValidationError(key, "expected an integer or [low, high]");
  }
  if (r.low < 1 || r.high < r.low) throw ValidationError(key, "range must be positive and ordered");
  return r;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("config", "must be an object");
  ExperimentConfig c;
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw ValidationError("seed", "must be a nonnegative integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("trials")) {
    if (!doc["trials"].is_number_integer() || doc["trials"].get<int>() < 1)
      throw ValidationError("trials", "must be a positive integer");
    c.trials = doc["trials"].get<int>();
  }
  c.states = read_range(doc, "states", c.states);
  c.actions = read_range(doc, "actions", c.actions);
  c.horizon = read_range(doc, "horizon", c.horizon);
  c.objectives = read_range(doc, "objectives", c.objectives);
  if (doc.contains("epsilons")) {
    const json& eps = doc["epsilons"];
    if (!eps.is_array() || eps.empty()) throw ValidationError("epsilons", "must be a nonempty array");
    c.epsilons.clear();
    for (std::size_t i = 0; i < eps.size(); ++i) {
      if (!eps[i].is_number() || !(eps[i].get<double>() > 0.0))
        throw ValidationError("epsilons[" + std::to_string(i) + "]", "must be positive");
      c.epsilons.push_back(eps[i].get<double>());
    }
  }
  json elicitation = json::object();
  for (const char* key : {"mode", "representation", "eta_stop", "eta_min", "precision_rel_tol",
                          "tau_rank", "budget"})
    if (doc.contains(key)) elicitation[key] = doc[key];
  c.elicitation = config_from_json(elicitation);
  if (doc.contains("validate_payloads")) {
    if (!doc["validate_payloads"].is_boolean())
      throw ValidationError("validate_payloads", "must be a boolean");
    c.validate_payloads = doc["validate_payloads"].get<bool>();
  }
  return c;
}

std::uint64_t trial_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 of (master, index)
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

InstanceDims trial_dims(const ExperimentConfig& config, std::uint64_t index) {
  std::mt19937_64 rng(trial_seed(config.seed, index) ^ 0xD1B54A32D192ED03ULL);
  InstanceDims dims;
  dims.states = draw(rng, config.states);
  dims.actions = draw(rng, config.actions);
  dims.horizon = draw(rng, config.horizon);
  dims.objectives = draw(rng, config.objectives);
  return dims;
}

double TrialRow::relative_suboptimality() const {
  return optimal > 0.0 ? suboptimality / optimal : suboptimality;
}

namespace {

/// Checks every trajectory-set payload before handing the query on.
class ValidatingResponder final : public Responder {
 public:
  ValidatingResponder(const Momdp& mdp, Responder& inner) : mdp_(&mdp), inner_(&inner) {}

  Verdict respond(const ComparisonQuery& query) override {
    for (const QueryOperand* side : {&query.left, &query.right})
      if (side->trajectories && !validate_set(*mdp_, side->policy, *side->trajectories).ok())
        ++failures_;
    return inner_->respond(query);
  }
  std::size_t failures() const noexcept { return failures_; }

 private:
  const Momdp* mdp_;
  Responder* inner_;
  std::size_t failures_ = 0;
};

}  // namespace

TrialResult run_trial(const Momdp& mdp, const Eigen::VectorXd& preference, double epsilon,
                      const ElicitationConfig& config, bool validate_payloads) {
  const auto start = std::chrono::steady_clock::now();
  SimulatedUser user(preference, epsilon);
  SimulatedResponder simulated(user);
  ValidatingResponder validating(mdp, simulated);
  Responder& responder = validate_payloads ? static_cast<Responder&>(validating) : simulated;
  OracleSession session(config.budget);
  ComparisonChannel channel(mdp, session, responder, config.representation);

  TrialResult result;
  result.report = run_elicitation(mdp, channel, config);
  const double optimal = optimal_personalized_value(mdp, preference);
  attach_diagnostics(mdp, result.report, user, optimal);
  result.transcript = session.transcript();

  TrialRow& row = result.row;
  const ElicitationReport& report = result.report;
  row.dims = {static_cast<int>(mdp.num_states()), static_cast<int>(mdp.num_actions()) - 1,
              mdp.horizon(), mdp.objectives()};
  row.epsilon = epsilon;
  row.queries = report.queries;
  row.query_cap = query_cap(mdp.objectives(), report.estimate.d, config);
  row.optimal = optimal;
  row.achieved = report.diagnostics->achieved;
  row.benchmark = report.diagnostics->benchmark;
  row.suboptimality = report.diagnostics->suboptimality;
  row.d = report.estimate.d;
  row.d_delta = report.estimate.d_delta;
  row.low_signal = report.low_signal;
  row.unconverged = report.unconverged_ratios.size();
  row.payload_failures = validating.failures();
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
  return result;
}

std::vector<TrialRow> run_experiment(const ExperimentConfig& config) {
  std::vector<TrialRow> rows;
  for (int t = 0; t < config.trials; ++t) {
    const auto index = static_cast<std::uint64_t>(t);
    const std::uint64_t seed = trial_seed(config.seed, index);
    const GeneratedInstance instance = generate_instance(seed, trial_dims(config, index));
    for (double eps : config.epsilons) {
      TrialRow row = run_trial(instance.mdp, instance.preference, eps, config.elicitation,
                               config.validate_payloads)
                         .row;
      row.seed = seed;
      row.trial = t;
      rows.push_back(row);
    }
  }
  std::sort(rows.begin(), rows.end(), [](const TrialRow& a, const TrialRow& b) {
    return a.trial != b.trial ? a.trial < b.trial : a.epsilon > b.epsilon;
  });
  return rows;
}

// ---------------------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ExperimentSummary aggregate(const std::vector<TrialRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("no rows to aggregate");
  std::vector<double> epsilons;
  for (const auto& r : rows) epsilons.push_back(r.epsilon);
  std::sort(epsilons.begin(), epsilons.end(), std::greater<>());
  epsilons.erase(std::unique(epsilons.begin(), epsilons.end()), epsilons.end());

  ExperimentSummary summary;
  for (double eps : epsilons) {
    EpsilonSummary s;
    s.epsilon = eps;
    std::vector<double> sub, rel, queries;
    for (const auto& r : rows) {
      if (r.epsilon != eps) continue;
      ++s.rows;
      sub.push_back(r.suboptimality);
      rel.push_back(r.relative_suboptimality());
      queries.push_back(static_cast<double>(r.queries.total()));
      s.max_queries = std::max(s.max_queries, r.queries.total());
      if (r.queries.total() > r.query_cap) s.within_cap = false;
    }
    s.median_suboptimality = quantile(sub, 0.5);
    s.q25_suboptimality = quantile(sub, 0.25);
    s.q75_suboptimality = quantile(sub, 0.75);
    s.median_relative = quantile(rel, 0.5);
    s.median_queries = quantile(queries, 0.5);
    summary.by_epsilon.push_back(s);
  }
  for (std::size_t i = 1; i < summary.by_epsilon.size(); ++i)
    if (summary.by_epsilon[i].median_suboptimality >
        summary.by_epsilon[i - 1].median_suboptimality + 1e-12)
      summary.monotone = false;
  return summary;
}

namespace {

std::string num(double x) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", x);
  return buffer;
}

}  // namespace

void write_trials_csv(std::ostream& out, const std::vector<TrialRow>& rows) {
  out << "# mopref trials v" << kCsvSchemaVersion << '\n'
      << "trial,seed,states,actions,horizon,objectives,epsilon,q_benchmark,q_ratio,q_precision,"
         "q_total,q_cap,v_star,achieved,benchmark_value,suboptimality,relative_suboptimality,d,"
         "d_delta,low_signal,unconverged,payload_failures\n";
  for (const auto& r : rows)
    out << r.trial << ',' << r.seed << ',' << r.dims.states << ',' << r.dims.actions << ','
        << r.dims.horizon << ',' << r.dims.objectives << ',' << num(r.epsilon) << ','
        << r.queries.benchmark << ',' << r.queries.ratio << ',' << r.queries.precision << ','
        << r.queries.total() << ',' << r.query_cap << ',' << num(r.optimal) << ','
        << num(r.achieved) << ',' << num(r.benchmark) << ',' << num(r.suboptimality) << ','
        << num(r.relative_suboptimality()) << ',' << r.d << ',' << r.d_delta << ','
        << (r.low_signal ? 1 : 0) << ',' << r.unconverged << ',' << r.payload_failures << '\n';
}

void write_timings_csv(std::ostream& out, const std::vector<TrialRow>& rows) {
  out << "# mopref timings v" << kCsvSchemaVersion << '\n' << "trial,epsilon,wall_ms\n";
  for (const auto& r : rows) out << r.trial << ',' << num(r.epsilon) << ',' << num(r.wall_ms) << '\n';
}

void write_summary_csv(std::ostream& out, const ExperimentSummary& summary) {
  out << "# mopref summary v" << kCsvSchemaVersion << '\n'
      << "epsilon,rows,median_suboptimality,q25_suboptimality,q75_suboptimality,"
         "median_relative_suboptimality,median_queries,max_queries,within_cap\n";
  for (const auto& s : summary.by_epsilon)
    out << num(s.epsilon) << ',' << s.rows << ',' << num(s.median_suboptimality) << ','
        << num(s.q25_suboptimality) << ',' << num(s.q75_suboptimality) << ','
        << num(s.median_relative) << ',' << num(s.median_queries) << ',' << s.max_queries << ','
        << (s.within_cap ? 1 : 0) << '\n';
}

void write_summary_table(std::ostream& out, const ExperimentSummary& summary) {
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %5s %14s %14s %14s %9s %7s %4s\n", "epsilon", "rows",
                "median_subopt", "q25", "q75", "med_q", "max_q", "cap");
  out << line;
  for (const auto& s : summary.by_epsilon) {
    std::snprintf(line, sizeof line, "%-10.3g %5zu %14.6g %14.6g %14.6g %9.1f %7zu %4s\n",
                  s.epsilon, s.rows, s.median_suboptimality, s.q25_suboptimality,
                  s.q75_suboptimality, s.median_queries, s.max_queries,
                  s.within_cap ? "ok" : "FAIL");
    out << line;
  }
  out << "median suboptimality nonincreasing as epsilon shrinks: "
      << (summary.monotone ? "pass" : "fail") << '\n';
}

}  // namespace mopref
