#include "mopref/basis.hpp"

#include <cmath>
#include <stdexcept>

#include "mopref/io.hpp"

namespace mopref {

using nlohmann::json;

std::vector<Candidate> single_objective_candidates(const Momdp& mdp) {
  const int k = mdp.objectives();
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    PlanResult plan = scalarized_plan(mdp, Direction::Unit(k, j));
    ValueVector value = vector_value(mdp, plan.policy);
    candidates.push_back({std::move(plan.policy), std::move(value)});
  }
  return candidates;
}

BenchmarkSearch::BenchmarkSearch(const Momdp& mdp)
    : BenchmarkSearch(single_objective_candidates(mdp)) {}

BenchmarkSearch::BenchmarkSearch(std::vector<Candidate> candidates)
    : candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw std::invalid_argument("benchmark search needs a candidate");
}

ComparisonRequest BenchmarkSearch::request() const {
  if (done()) throw std::logic_error("benchmark search is finished");
  return {Phase::Benchmark, MixturePolicy(candidates_[incumbent_].policy),
          MixturePolicy(candidates_[challenger_].policy)};
}

void BenchmarkSearch::feed(Verdict verdict) {
  if (done()) throw std::logic_error("benchmark search is finished");
  if (verdict == Verdict::PreferRight) incumbent_ = challenger_;
  ++challenger_;
  ++comparisons_;
}

BenchmarkSelection BenchmarkSearch::result() const {
  return {incumbent_, candidates_[incumbent_].policy, candidates_[incumbent_].value, candidates_,
          comparisons_};
}

BenchmarkSelection select_benchmark(const Momdp& mdp, ComparisonChannel& oracle) {
  BenchmarkSearch search(mdp);
  while (!search.done()) search.feed(oracle.compare(search.request()));
  return search.result();
}

// ---------------------------------------------------------------------------

namespace {

/// Two passes of modified Gram-Schmidt against `basis`.
Eigen::VectorXd orthogonalize(Eigen::VectorXd v, const std::vector<Eigen::VectorXd>& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& q : basis) v -= q.dot(v) * q;
  return v;
}

}  // namespace

std::vector<Direction> orthonormal_complement(const std::vector<ValueVector>& values,
                                              std::size_t dim, double tol) {
  std::vector<Eigen::VectorXd> span;
  for (const auto& v : values) {
    if (static_cast<std::size_t>(v.size()) != dim)
      throw std::invalid_argument("value dimension does not match");
    Eigen::VectorXd r = orthogonalize(v, span);
    const double norm = r.norm();
    if (norm > tol) span.push_back(r / norm);
  }

  std::vector<Direction> complement;
  const auto n = static_cast<Eigen::Index>(dim);
  for (Eigen::Index j = 0; j < n && span.size() + complement.size() < dim; ++j) {
    Eigen::VectorXd r = orthogonalize(Eigen::VectorXd::Unit(n, j), span);
    r = orthogonalize(std::move(r), complement);
    const double norm = r.norm();
    if (norm > tol) complement.push_back(r / norm);
  }
  return complement;
}

double default_rank_tolerance(const Momdp& mdp) { return 1e-8 * mdp.value_norm_bound(); }

DirectionalBasis build_directional_basis(const Momdp& mdp, const Policy& benchmark,
                                         const ValueVector& benchmark_value, double tau_rank) {
  const auto k = static_cast<std::size_t>(mdp.objectives());
  DirectionalBasis basis;
  basis.tau_rank = tau_rank;
  const double norm = benchmark_value.norm();
  Direction first = norm > 0.0 ? Direction(benchmark_value / norm) : Direction::Zero(mdp.objectives());
  basis.entries.push_back({benchmark, benchmark_value, std::move(first), norm});
  if (norm <= tau_rank) return basis;

  for (std::size_t i = 2; i <= k; ++i) {
    std::vector<ValueVector> values;
    for (const auto& e : basis.entries) values.push_back(e.value);
    const std::vector<Direction> rhos = orthonormal_complement(values, k, tau_rank);
    if (rhos.empty()) break;

    double best = -1.0;
    std::size_t best_j = 0;
    Policy best_policy;
    for (std::size_t j = 0; j < rhos.size(); ++j) {
      PlanResult plus = scalarized_plan(mdp, rhos[j]);
      PlanResult minus = scalarized_plan(mdp, -rhos[j]);
      const double reach = std::max(std::abs(plus.value), std::abs(minus.value));
      if (reach > best) {
        best = reach;
        best_j = j;
        best_policy = std::abs(plus.value) > std::abs(minus.value) ? std::move(plus.policy)
                                                                   : std::move(minus.policy);
      }
    }
    if (best <= tau_rank) break;
    ValueVector value = vector_value(mdp, best_policy);
    basis.entries.push_back({std::move(best_policy), std::move(value), rhos[best_j], best});
  }
  return basis;
}

DirectionalBasis build_directional_basis(const Momdp& mdp, const BenchmarkSelection& benchmark) {
  return build_directional_basis(mdp, benchmark.benchmark, benchmark.value,
                                 default_rank_tolerance(mdp));
}

// ---------------------------------------------------------------------------

double ratio_cap(int objectives) { return 2.0 * objectives; }

int ratio_iteration_cap(int objectives, double eta_stop) {
  return static_cast<int>(std::ceil(std::log2(4.0 * objectives / eta_stop)));
}

RatioSearch::RatioSearch(Policy benchmark, Policy target, Policy do_nothing, double c_alpha,
                         int max_iterations, bool guard, double guard_floor)
    : benchmark_(std::move(benchmark)),
      target_(std::move(target)),
      do_nothing_(std::move(do_nothing)),
      c_alpha_(c_alpha),
      max_iterations_(max_iterations),
      guard_(guard),
      guard_floor_(guard_floor),
      high_(2.0 * c_alpha),
      alpha_(c_alpha) {
  if (!(c_alpha >= 1.0)) throw std::invalid_argument("C_alpha must be at least 1");
  if (max_iterations < 1) throw std::invalid_argument("iteration cap must be positive");
}

ComparisonRequest RatioSearch::probe(double alpha) const {
  if (alpha > 1.0) {
    const double scale = 1.0 / alpha;
    return {Phase::Ratio, MixturePolicy(benchmark_),
            MixturePolicy({{scale, target_}, {1.0 - scale, do_nothing_}})};
  }
  return {Phase::Ratio, MixturePolicy(target_),
          MixturePolicy({{alpha, benchmark_}, {1.0 - alpha, do_nothing_}})};
}

ComparisonRequest RatioSearch::request() const {
  if (done_) throw std::logic_error("ratio search is finished");
  if (guard_stage_ == 1) return probe(2.0 * c_alpha_);
  if (guard_stage_ == 2) return probe(guard_floor_);
  return probe(alpha_);
}

void RatioSearch::feed(Verdict verdict) {
  if (done_) throw std::logic_error("ratio search is finished");
  if (guard_stage_ > 0) {
    ++guard_probes_;
    if (verdict != Verdict::Indistinguishable || guard_stage_ == 2) {
      low_signal_ = verdict == Verdict::Indistinguishable;
      done_ = true;
    } else {
      guard_stage_ = 2;
    }
    return;
  }

  ++iterations_;
  if (verdict == Verdict::Indistinguishable) {
    converged_ = true;
    if (guard_ && iterations_ == 1)
      guard_stage_ = 1;
    else
      done_ = true;
    return;
  }
  // Above 1 the benchmark sits on the left; at or below 1 the target does.
  const bool benchmark_better = alpha_ > 1.0 ? verdict == Verdict::PreferLeft
                                             : verdict == Verdict::PreferRight;
  if (benchmark_better)
    high_ = alpha_;
  else
    low_ = alpha_;
  alpha_ = 0.5 * (low_ + high_);
  if (iterations_ >= max_iterations_) done_ = true;
}

RatioEstimate RatioSearch::result() const {
  return {alpha_, iterations_, converged_, guard_probes_, low_signal_};
}

RatioEstimate estimate_ratio(ComparisonChannel& oracle, const Momdp& mdp, const Policy& benchmark,
                             const Policy& target, double c_alpha, int max_iterations) {
  RatioSearch search(benchmark, target, do_nothing_policy(mdp), c_alpha, max_iterations);
  while (!search.done()) search.feed(oracle.compare(search.request()));
  return search.result();
}

RatioEstimates estimate_all_ratios(ComparisonChannel& oracle, const Momdp& mdp,
                                   const DirectionalBasis& basis, const RatioSearchConfig& config) {
  if (basis.entries.empty()) throw std::invalid_argument("basis is empty");
  RatioEstimates out;
  out.c_alpha = ratio_cap(mdp.objectives());
  const int cap = ratio_iteration_cap(mdp.objectives(), config.eta_stop);
  for (std::size_t i = 1; i < basis.entries.size(); ++i)
    out.ratios.push_back(estimate_ratio(oracle, mdp, basis.entries.front().policy,
                                        basis.entries[i].policy, out.c_alpha, cap));
  return out;
}

// ---------------------------------------------------------------------------

const DirectionalBasis& BasisCache::get_or_build(const Momdp& mdp, const std::string& instance,
                                                 const Policy& benchmark,
                                                 const ValueVector& benchmark_value,
                                                 double tau_rank) {
  const std::string key = instance + "/" + policy_digest(benchmark);
  std::lock_guard lock(mutex_);
  auto it = bases_.find(key);
  if (it != bases_.end() && it->second.tau_rank == tau_rank) return it->second;
  DirectionalBasis basis = build_directional_basis(mdp, benchmark, benchmark_value, tau_rank);
  ++builds_;
  return bases_.insert_or_assign(key, std::move(basis)).first->second;
}

std::size_t BasisCache::builds() const {
  std::lock_guard lock(mutex_);
  return builds_;
}

std::size_t BasisCache::size() const {
  std::lock_guard lock(mutex_);
  return bases_.size();
}

json basis_to_json(const Momdp& mdp, const DirectionalBasis& basis) {
  json entries = json::array();
  for (const auto& e : basis.entries)
    entries.push_back({{"policy", policy_to_json(mdp, e.policy)},
                       {"value", vector_to_json(e.value)},
                       {"direction", vector_to_json(e.direction)},
                       {"magnitude", e.magnitude}});
  return {{"tau_rank", basis.tau_rank}, {"entries", std::move(entries)}};
}

DirectionalBasis basis_from_json(const Momdp& mdp, const json& doc) {
  DirectionalBasis basis;
  try {
    basis.tau_rank = doc.at("tau_rank").get<double>();
    for (const auto& e : doc.at("entries"))
      basis.entries.push_back({policy_from_json(mdp, e.at("policy")), vector_from_json(e.at("value")),
                               vector_from_json(e.at("direction")), e.at("magnitude").get<double>()});
  } catch (const json::exception& e) {
    throw ValidationError("basis", e.what());
  }
  return basis;
}

json BasisCache::to_json(const Momdp& mdp) const {
  std::lock_guard lock(mutex_);
  json doc = json::object();
  for (const auto& [key, basis] : bases_) {
    const auto slash = key.find('/');
    doc[key.substr(0, slash)][key.substr(slash + 1)] = basis_to_json(mdp, basis);
  }
  return doc;
}

void BasisCache::merge_json(const Momdp& mdp, const json& doc) {
  if (!doc.is_object()) throw ValidationError("basis_cache", "must be an object");
  std::lock_guard lock(mutex_);
  for (const auto& [instance, by_benchmark] : doc.items())
    for (const auto& [benchmark, basis] : by_benchmark.items())
      bases_.insert_or_assign(instance + "/" + benchmark, basis_from_json(mdp, basis));
}

}  // namespace mopref
