#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "mopref/engine.hpp"
#include "oracles.hpp"

using namespace mopref;
using namespace mopref::testing;
using nlohmann::json;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Eigen::Index>(v.size()));
}

struct Run {
  ElicitationReport report;
  std::vector<TranscriptRecord> transcript;
};

Run simulate(const Momdp& mdp, const Eigen::VectorXd& w, double eps,
             const ElicitationConfig& config = {}, BasisCache* cache = nullptr) {
  SimulatedUser user(w, eps);
  SimulatedResponder responder(user);
  OracleSession session(config.budget);
  ComparisonChannel channel(mdp, session, responder, config.representation);
  ElicitationReport report = run_elicitation(mdp, channel, config, cache);
  attach_diagnostics(mdp, report, user, optimal_personalized_value(mdp, w));
  return {report, session.transcript()};
}

std::vector<Verdict> verdicts(const std::vector<TranscriptRecord>& transcript) {
  std::vector<Verdict> out;
  for (const auto& r : transcript) out.push_back(*r.verdict);
  return out;
}

Eigen::VectorXd random_preference(std::mt19937_64& rng, int k) {
  Eigen::VectorXd w(k);
  for (int i = 0; i < k; ++i) w(i) = uniform(rng, 0.05, 1.0);
  return w * (1.0 + uniform(rng)) / w.norm();
}

bool well_separated(const Momdp& mdp, const Eigen::VectorXd& w) {
  std::vector<double> values;
  for (const Policy& p : all_policies(mdp)) values.push_back(w.dot(value_by_enumeration(mdp, p)));
  std::sort(values.begin(), values.end());
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double gap = values[i] - values[i - 1];
    if (gap > 1e-12 && gap < 1e-6) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("four-arm bandit end to end") {
  const Momdp mdp = load_fixture("bandit4");
  const Run run = simulate(mdp, vec({1, 1, 1}), 1e-6);
  const ElicitationReport& r = run.report;
  CHECK(r.benchmark == play(mdp, "a3"));
  CHECK(r.output_policy == play(mdp, "a3"));
  CHECK(r.estimate.d == 3);
  REQUIRE(r.diagnostics);
  CHECK(r.diagnostics->suboptimality == 0.0);
  CHECK(r.queries.benchmark == 2);
  CHECK(r.queries.precision == 0);
  CHECK(r.queries.total() == run.transcript.size());
  CHECK(r.queries.total() <= query_cap(3, r.estimate.d, r.config));
  CHECK_FALSE(r.low_signal);
  CHECK(r.unconverged_ratios.empty());
  CHECK(r.estimate.residual <= 1e-8);
  const Eigen::VectorXd w_prime = vec({1, 1, 1}) / vec({1, 1, 1}).dot(vector_value(mdp, r.benchmark));
  CHECK((r.estimate.weights - w_prime).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("coarse user does not break the pipeline") {
  const Momdp mdp = load_fixture("bandit4");
  const Run run = simulate(mdp, vec({1, 1, 1}), 0.5);
  CHECK(run.report.diagnostics->suboptimality >= 0.0);
  CHECK(run.report.queries.total() == run.transcript.size());
  CHECK(run.report.queries.total() <= query_cap(3, run.report.estimate.d, run.report.config));
}

TEST_CASE("zero-valued benchmark is flagged as low signal") {
  const Momdp mdp = bandit({{0, 0}, {0, 0}});
  const Run run = simulate(mdp, vec({1, 1}), 0.01);
  CHECK(run.report.low_signal);
  CHECK(run.report.output_policy == run.report.benchmark);
  CHECK(run.report.estimate.weights.size() == 2);
}

TEST_CASE("tiny benchmark value trips the guard") {
  const Momdp mdp = bandit({{1e-4, 0}, {0, 1e-4}});
  const Run run = simulate(mdp, vec({1, 1}), 0.1);
  CHECK(run.report.low_signal);
  CHECK(run.report.ratios.size() == 1);
  CHECK(run.report.ratios[0].guard_probes == 2);
  CHECK(run.report.queries.total() == run.transcript.size());
}

TEST_CASE("scripted replay reproduces the report") {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    const Momdp mdp = random_instance(rng, random_dims(rng, 4, 3, 3, 4));
    const Eigen::VectorXd w = random_preference(rng, mdp.objectives());
    ElicitationConfig config;
    config.mode = trial % 2 ? SolveMode::Truncated : SolveMode::Full;
    const Run run = simulate(mdp, w, 1e-4, config);

    ScriptedResponder script(verdicts(run.transcript));
    OracleSession session;
    ComparisonChannel channel(mdp, session, script);
    ElicitationReport replay = run_elicitation(mdp, channel, config);
    CHECK(script.consumed() == run.transcript.size());
    ElicitationReport original = run.report;
    original.diagnostics.reset();
    CHECK(report_to_json(mdp, replay).dump() == report_to_json(mdp, original).dump());
  }
}

TEST_CASE("the step engine matches the synchronous runner") {
  const Momdp mdp = load_fixture("coinflip");
  const Eigen::VectorXd w = vec({0.8, 0.6});
  ElicitationConfig config;
  config.mode = SolveMode::Truncated;
  const Run run = simulate(mdp, w, 1e-3, config);

  SimulatedUser user(w, 1e-3);
  ElicitationEngine engine(mdp, config);
  std::size_t steps = 0;
  while (auto request = engine.pending()) {
    engine.answer(user.answer(vector_value(mdp, request->left), vector_value(mdp, request->right)));
    ++steps;
  }
  REQUIRE(engine.finished());
  CHECK_FALSE(engine.pending());
  CHECK(steps == run.transcript.size());
  ElicitationReport expected = run.report;
  expected.diagnostics.reset();
  CHECK(report_to_json(mdp, engine.report()).dump() == report_to_json(mdp, expected).dump());
  CHECK_THROWS(engine.answer(Verdict::PreferLeft));
}

TEST_CASE("trajectory-set queries give the same answers") {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 10; ++trial) {
    const Momdp mdp = random_instance(rng, random_dims(rng, 4, 3, 3, 3));
    const Eigen::VectorXd w = random_preference(rng, mdp.objectives());
    ElicitationConfig explicit_config;
    ElicitationConfig set_config;
    set_config.representation = Representation::TrajectorySet;
    const Run a = simulate(mdp, w, 1e-5, explicit_config);
    const Run b = simulate(mdp, w, 1e-5, set_config);
    CHECK(verdicts(a.transcript) == verdicts(b.transcript));
    CHECK(a.report.output_policy == b.report.output_policy);
  }
}

TEST_CASE("property: exact recovery finds the optimum") {
  std::mt19937_64 rng(83);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Momdp mdp = random_instance(rng, random_dims(rng, 3, 3, 3, 4));
    const Eigen::VectorXd w = random_preference(rng, mdp.objectives());
    if (!well_separated(mdp, w)) continue;
    ++checked;
    const Run run = simulate(mdp, w, 1e-12);
    REQUIRE(run.report.diagnostics);
    CHECK(run.report.diagnostics->optimal == doctest::Approx(brute_force_optimum(mdp, w)).epsilon(1e-12));
    CHECK(run.report.diagnostics->suboptimality <= 1e-9);
    CHECK(run.report.queries.total() <= query_cap(mdp.objectives(), run.report.estimate.d, run.report.config));
  }
  CHECK(checked >= 20);
}

TEST_CASE("truncated mode") {
  const Momdp mdp = load_fixture("bandit4");
  ElicitationConfig config;
  config.mode = SolveMode::Truncated;
  const Run run = simulate(mdp, vec({1, 1, 1}), 1e-3, config);
  const ElicitationReport& r = run.report;
  REQUIRE(r.precision);
  REQUIRE(r.estimate.delta);
  CHECK(*r.estimate.delta == doctest::Approx(truncation_delta(3, r.precision->eta)));
  CHECK(r.estimate.d_delta <= r.estimate.d);
  CHECK(r.estimate.d_delta >= 1);
  CHECK(r.queries.precision == static_cast<std::size_t>(r.precision->queries));
  CHECK(r.queries.total() <= query_cap(3, r.estimate.d, config));
  const double expected_eta = 1e-3 / vec({1, 1, 1}).dot(vector_value(mdp, r.benchmark));
  CHECK(std::abs(r.precision->eta - expected_eta) <= 0.011 * expected_eta);
}

TEST_CASE("budget exhaustion surfaces as an oracle error") {
  const Momdp mdp = load_fixture("bandit4");
  ElicitationConfig config;
  config.budget = 5;
  try {
    simulate(mdp, vec({1, 1, 1}), 1e-6, config);
    FAIL("expected an oracle error");
  } catch (const OracleError& e) {
    CHECK(e.code() == OracleError::Code::BudgetExhausted);
  }
}

TEST_CASE("shared cache builds each basis once") {
  const Momdp mdp = load_fixture("bandit4");
  BasisCache cache;
  simulate(mdp, vec({1, 1, 1}), 1e-6, {}, &cache);
  simulate(mdp, vec({1, 1.1, 1}), 1e-6, {}, &cache);
  CHECK(cache.builds() == 1);
  simulate(mdp, vec({1, 0.1, 0.1}), 1e-6, {}, &cache);
  CHECK(cache.builds() == 2);
}

TEST_CASE("configuration documents") {
  const ElicitationConfig c = config_from_json(json::parse(
      R"({"mode":"truncated","representation":"trajset","eta_stop":1e-6,"budget":40})"));
  CHECK(c.mode == SolveMode::Truncated);
  CHECK(c.representation == Representation::TrajectorySet);
  CHECK(c.eta_stop == 1e-6);
  CHECK(c.budget == 40u);
  CHECK(config_from_json(config_to_json(c)).budget == 40u);
  CHECK(query_cap(3, 3, ElicitationConfig{}) == 2 + 2 * 34);
  CHECK(query_cap(3, 1, c) == 2);

  CHECK_THROWS_AS(config_from_json(json::parse(R"({"mode":"fast"})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"eta_stop":0})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"budget":-1})")), ValidationError);
  CHECK_THROWS_AS(config_from_json(json::parse("[]")), ValidationError);
}

TEST_CASE("report document") {
  const Momdp mdp = load_fixture("bandit4");
  const Run run = simulate(mdp, vec({1, 1, 1}), 1e-6);
  const json doc = report_to_json(mdp, run.report);
  for (const char* key : {"weights", "mode", "d", "d_delta", "residual", "benchmark", "ratios",
                          "magnitudes", "output_policy", "output_value", "queries", "flags",
                          "diagnostics"})
    CHECK(doc.contains(key));
  CHECK(doc["queries"]["total"] == run.transcript.size());
  CHECK(doc["mode"] == "full");
  CHECK(doc["diagnostics"]["suboptimality"] == 0.0);
  CHECK(doc.dump().find("timestamp") == std::string::npos);
}
