#include "mopref/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mopref/io.hpp"

namespace mopref {

using nlohmann::json;

ElicitationConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("config", "must be an object");
  ElicitationConfig config;
  auto positive = [&](const char* key, double& slot) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_number()) throw ValidationError(std::string("config.") + key, "must be a number");
    slot = doc[key].get<double>();
    if (!(slot > 0.0 && slot < 1.0))
      throw ValidationError(std::string("config.") + key, "must lie in (0, 1)");
  };
  if (doc.contains("mode")) {
    const auto& v = doc["mode"];
    auto mode = v.is_string() ? parse_solve_mode(v.get<std::string>()) : std::nullopt;
    if (!mode) throw ValidationError("config.mode", "expected \"full\" or \"truncated\"");
    config.mode = *mode;
  }
  if (doc.contains("representation")) {
    const auto& v = doc["representation"];
    auto rep = v.is_string() ? parse_representation(v.get<std::string>()) : std::nullopt;
    if (!rep) throw ValidationError("config.representation", "expected \"explicit\" or \"trajset\"");
    config.representation = *rep;
  }
  positive("eta_stop", config.eta_stop);
  positive("eta_min", config.eta_min);
  positive("precision_rel_tol", config.precision_rel_tol);
  if (doc.contains("tau_rank") && !doc["tau_rank"].is_null()) {
    if (!doc["tau_rank"].is_number() || !(doc["tau_rank"].get<double>() > 0.0))
      throw ValidationError("config.tau_rank", "must be a positive number");
    config.tau_rank = doc["tau_rank"].get<double>();
  }
  if (doc.contains("budget") && !doc["budget"].is_null()) {
    if (!doc["budget"].is_number_unsigned())
      throw ValidationError("config.budget", "must be a nonnegative integer");
    config.budget = doc["budget"].get<std::size_t>();
  }
  return config;
}

json config_to_json(const ElicitationConfig& config) {
  json doc = {{"mode", to_string(config.mode)},
              {"representation", to_string(config.representation)},
              {"eta_stop", config.eta_stop},
              {"eta_min", config.eta_min},
              {"precision_rel_tol", config.precision_rel_tol}};
  doc["tau_rank"] = config.tau_rank ? json(*config.tau_rank) : json(nullptr);
  doc["budget"] = config.budget ? json(*config.budget) : json(nullptr);
  return doc;
}

std::size_t query_cap(int objectives, std::size_t d, const ElicitationConfig& config) {
  std::size_t cap = static_cast<std::size_t>(objectives - 1);
  if (d > 1) {
    cap += (d - 1) * static_cast<std::size_t>(ratio_iteration_cap(objectives, config.eta_stop));
    if (config.mode == SolveMode::Truncated)
      cap += static_cast<std::size_t>(
          precision_query_cap({config.eta_min, config.precision_rel_tol}));
  }
  return cap;
}

// ---------------------------------------------------------------------------

ElicitationEngine::ElicitationEngine(const Momdp& mdp, ElicitationConfig config, BasisCache* cache)
    : mdp_(&mdp),
      config_(config),
      cache_(cache),
      tau_rank_(config.tau_rank.value_or(default_rank_tolerance(mdp))) {
  report_.instance = instance_digest(mdp);
  report_.config = config_;
  benchmark_search_.emplace(mdp);
  advance();
}

std::optional<ComparisonRequest> ElicitationEngine::pending() const {
  switch (stage_) {
    case Stage::Benchmark: return benchmark_search_->request();
    case Stage::Ratio: return ratio_search_->request();
    case Stage::Precision: return precision_search_->request();
    case Stage::Done: break;
  }
  return std::nullopt;
}

void ElicitationEngine::answer(Verdict verdict) {
  switch (stage_) {
    case Stage::Benchmark:
      benchmark_search_->feed(verdict);
      ++report_.queries.benchmark;
      break;
    case Stage::Ratio:
      ratio_search_->feed(verdict);
      ++report_.queries.ratio;
      break;
    case Stage::Precision:
      precision_search_->feed(verdict);
      ++report_.queries.precision;
      break;
    case Stage::Done: throw std::logic_error("elicitation is finished");
  }
  advance();
}

const ElicitationReport& ElicitationEngine::report() const {
  if (!finished()) throw std::logic_error("elicitation is still running");
  return report_;
}

void ElicitationEngine::advance() {
  if (stage_ == Stage::Benchmark) {
    if (!benchmark_search_->done()) return;
    begin_ratios();
  }
  if (stage_ == Stage::Ratio) {
    if (!ratio_search_->done()) return;
    const RatioEstimate estimate = ratio_search_->result();
    report_.ratios.push_back(estimate);
    if (!estimate.converged) report_.unconverged_ratios.push_back(ratio_index_);
    if (estimate.low_signal) {
      report_.low_signal = true;
      finish();
      return;
    }
    if (ratio_index_ + 1 < basis_.dimension()) {
      begin_ratio(ratio_index_ + 1);
      return;
    }
    if (config_.mode == SolveMode::Truncated) {
      stage_ = Stage::Precision;
      precision_search_.emplace(selection_.benchmark, do_nothing_policy(*mdp_),
                                PrecisionSearchConfig{config_.eta_min, config_.precision_rel_tol});
    } else {
      finish();
      return;
    }
  }
  if (stage_ == Stage::Precision) {
    if (!precision_search_->done()) return;
    report_.precision = precision_search_->result();
    finish();
  }
}

void ElicitationEngine::begin_ratios() {
  selection_ = benchmark_search_->result();
  report_.benchmark_index = selection_.index;
  report_.benchmark = selection_.benchmark;
  basis_ = cache_ ? cache_->get_or_build(*mdp_, report_.instance, selection_.benchmark,
                                         selection_.value, tau_rank_)
                  : build_directional_basis(*mdp_, selection_.benchmark, selection_.value,
                                            tau_rank_);
  for (const auto& e : basis_.entries) report_.magnitudes.push_back(e.magnitude);

  if (selection_.value.norm() <= tau_rank_) {
    report_.low_signal = true;
    finish();
  } else if (basis_.dimension() == 1) {
    finish();
  } else {
    begin_ratio(1);
  }
}

void ElicitationEngine::begin_ratio(std::size_t index) {
  stage_ = Stage::Ratio;
  ratio_index_ = index;
  ratio_search_.emplace(selection_.benchmark, basis_.entries[index].policy,
                        do_nothing_policy(*mdp_), ratio_cap(mdp_->objectives()),
                        ratio_iteration_cap(mdp_->objectives(), config_.eta_stop),
                        /*guard=*/index == 1);
}

void ElicitationEngine::finish() {
  stage_ = Stage::Done;
  const Eigen::Index k = mdp_->objectives();

  if (report_.low_signal) {
    WeightEstimate estimate;
    estimate.mode = config_.mode;
    estimate.d = basis_.dimension();
    estimate.d_delta = 1;
    if (selection_.value.norm() > tau_rank_) {
      RatioMatrix matrix{selection_.value.transpose(), tau_rank_};
      estimate = solve_full(matrix);
      estimate.mode = config_.mode;
      estimate.d = basis_.dimension();
    } else {
      estimate.weights = Eigen::VectorXd::Zero(k);
      estimate.residual = 1.0;
    }
    report_.estimate = std::move(estimate);
    report_.output_policy = selection_.benchmark;
    report_.output_value = selection_.value;
    return;
  }

  std::vector<double> alphas;
  for (const auto& r : report_.ratios) alphas.push_back(r.alpha);
  const RatioMatrix matrix = assemble_ratio_matrix(selection_.value, basis_, alphas);
  if (config_.mode == SolveMode::Truncated && report_.precision) {
    report_.estimate =
        truncate_and_solve(matrix, basis_, truncation_delta(static_cast<int>(k), report_.precision->eta));
  } else {
    report_.estimate = solve_full(matrix);
    report_.estimate.mode = config_.mode;
  }
  PlanResult plan = scalarized_plan(*mdp_, report_.estimate.weights);
  report_.output_value = vector_value(*mdp_, plan.policy);
  report_.output_policy = std::move(plan.policy);
}

ElicitationReport run_elicitation(const Momdp& mdp, ComparisonChannel& oracle,
                                  const ElicitationConfig& config, BasisCache* cache) {
  ElicitationEngine engine(mdp, config, cache);
  while (auto request = engine.pending()) engine.answer(oracle.compare(*request));
  return engine.report();
}

// ---------------------------------------------------------------------------

double optimal_personalized_value(const Momdp& mdp, const Eigen::VectorXd& preference,
                                  std::uint64_t brute_force_limit) {
  if (policy_count(mdp) > brute_force_limit) return scalarized_plan(mdp, preference).value;
  PolicyEnumerator policies(mdp, brute_force_limit);
  double best = -std::numeric_limits<double>::infinity();
  while (auto policy = policies.next())
    best = std::max(best, preference.dot(vector_value(mdp, *policy)));
  return best;
}

void attach_diagnostics(const Momdp& mdp, ElicitationReport& report, const SimulatedUser& user,
                        double optimal) {
  Diagnostics diag;
  diag.preference = user.preference();
  diag.precision = user.precision();
  diag.optimal = optimal;
  diag.achieved = user.personalized_value(report.output_value);
  diag.benchmark = user.personalized_value(vector_value(mdp, report.benchmark));
  diag.suboptimality = optimal - diag.achieved;
  report.diagnostics = std::move(diag);
}

json report_to_json(const Momdp& mdp, const ElicitationReport& report) {
  json ratios = json::array();
  for (const auto& r : report.ratios)
    ratios.push_back({{"alpha", r.alpha},
                      {"iterations", r.iterations},
                      {"converged", r.converged},
                      {"guard_probes", r.guard_probes}});

  const WeightEstimate& est = report.estimate;
  json doc = {
      {"instance", report.instance},
      {"config", config_to_json(report.config)},
      {"weights", vector_to_json(est.weights)},
      {"mode", to_string(est.mode)},
      {"d", est.d},
      {"d_delta", est.d_delta},
      {"residual", est.residual},
      {"benchmark", {{"index", report.benchmark_index},
                     {"policy", policy_to_json(mdp, report.benchmark)}}},
      {"ratios", std::move(ratios)},
      {"magnitudes", report.magnitudes},
      {"output_policy", policy_to_json(mdp, report.output_policy)},
      {"output_value", vector_to_json(report.output_value)},
      {"queries", {{"benchmark", report.queries.benchmark},
                   {"ratio", report.queries.ratio},
                   {"precision", report.queries.precision},
                   {"total", report.queries.total()}}},
  };
  doc["delta"] = est.delta ? json(*est.delta) : json(nullptr);

  json flags = {{"low_signal", report.low_signal},
                {"unconverged_ratios", report.unconverged_ratios},
                {"precision_saturated", report.precision && report.precision->saturated},
                {"precision_floor", report.precision && report.precision->floored},
                {"delta_from_precision_ratio", est.delta.has_value()}};
  doc["flags"] = std::move(flags);
  doc["precision"] = report.precision ? json{{"eta", report.precision->eta},
                                             {"queries", report.precision->queries}}
                                      : json(nullptr);
  if (report.diagnostics) {
    const Diagnostics& diag = *report.diagnostics;
    doc["diagnostics"] = {{"w_star", vector_to_json(diag.preference)},
                          {"epsilon", diag.precision},
                          {"v_star", diag.optimal},
                          {"achieved", diag.achieved},
                          {"benchmark_value", diag.benchmark},
                          {"suboptimality", diag.suboptimality}};
  }
  return doc;
}

}  // namespace mopref
