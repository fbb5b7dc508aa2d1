#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mopref/momdp.hpp"
#include "mopref/oracle.hpp"

namespace mopref {

struct Candidate {
  Policy policy;
  ValueVector value;
};

struct BenchmarkSelection {
  std::size_t index = 0;  // into candidates
  Policy benchmark;
  ValueVector value;
  std::vector<Candidate> candidates;  // pi^{e_1} .. pi^{e_k}
  std::size_t comparisons_used = 0;
};

/// Scalarized optimum for every standard basis direction e_1 .. e_k.
std::vector<Candidate> single_objective_candidates(const Momdp& mdp);

/// Sequential tournament over the single-objective optima: the incumbent is
/// replaced only when the challenger is strictly preferred. k-1 comparisons.
class BenchmarkSearch {
 public:
  explicit BenchmarkSearch(const Momdp& mdp);
  explicit BenchmarkSearch(std::vector<Candidate> candidates);

  bool done() const noexcept { return challenger_ >= candidates_.size(); }
  /// Left is the incumbent, right the challenger. Requires !done().
  ComparisonRequest request() const;
  void feed(Verdict verdict);
  BenchmarkSelection result() const;

 private:
  std::vector<Candidate> candidates_;
  std::size_t incumbent_ = 0;
  std::size_t challenger_ = 1;
  std::size_t comparisons_ = 0;
};

BenchmarkSelection select_benchmark(const Momdp& mdp, ComparisonChannel& oracle);

/// Orthonormal basis of span(values)^perp in R^dim, built by orthogonalizing
/// e_1, e_2, ... (in order) against the values and the vectors already kept;
/// residuals with norm <= tol are dropped.
std::vector<Direction> orthonormal_complement(const std::vector<ValueVector>& values,
                                              std::size_t dim, double tol);

struct BasisEntry {
  Policy policy;
  ValueVector value;
  Direction direction;  // u_i
  double magnitude;     // m_i = max(|v^{u_i}|, |v^{-u_i}|); |V^{pi_1}| for i = 1
};

struct DirectionalBasis {
  std::vector<BasisEntry> entries;
  double tau_rank = 0.0;

  std::size_t dimension() const noexcept { return entries.size(); }
};

/// 1e-8 * sqrt(k) * H.
double default_rank_tolerance(const Momdp& mdp);

/// Extends the benchmark to a basis of the achievable value span: in round i
/// the complement of the values found so far is searched for the direction
/// along which some policy reaches furthest (either sign). Stops when that
/// reach is <= tau_rank. Uses planning only, no comparisons.
DirectionalBasis build_directional_basis(const Momdp& mdp, const Policy& benchmark,
                                         const ValueVector& benchmark_value, double tau_rank);
DirectionalBasis build_directional_basis(const Momdp& mdp, const BenchmarkSelection& benchmark);

struct RatioEstimate {
  double alpha = 0.0;
  int iterations = 0;      // binary-search probes
  bool converged = false;  // stopped on "indistinguishable"
  int guard_probes = 0;
  bool low_signal = false;
};

/// Ratio cap C_alpha = 2k.
double ratio_cap(int objectives);
/// ceil(log2(4k / eta_stop)).
int ratio_iteration_cap(int objectives, double eta_stop);

/// Binary search for alpha with alpha * <w, V^{pi_1}> ~ <w, V^{target}> over
/// [0, 2 C_alpha], starting at C_alpha. For alpha <= 1 the target is compared
/// with alpha pi_1 + (1 - alpha) pi_0; above 1, pi_1 is compared with
/// (1/alpha) target + (1 - 1/alpha) pi_0.
///
/// With `guard`, an "indistinguishable" first probe is followed by probes at
/// alpha = 2 C_alpha and alpha = guard_floor; if both are indistinguishable
/// too, the estimate is marked low-signal.
class RatioSearch {
 public:
  RatioSearch(Policy benchmark, Policy target, Policy do_nothing, double c_alpha,
              int max_iterations, bool guard = false, double guard_floor = 1e-9);

  bool done() const noexcept { return done_; }
  ComparisonRequest request() const;
  void feed(Verdict verdict);
  RatioEstimate result() const;

 private:
  ComparisonRequest probe(double alpha) const;

  Policy benchmark_;
  Policy target_;
  Policy do_nothing_;
  double c_alpha_;
  int max_iterations_;
  bool guard_;
  double guard_floor_;

  double low_ = 0.0;
  double high_;
  double alpha_;
  int iterations_ = 0;
  bool converged_ = false;
  bool done_ = false;
  int guard_stage_ = 0;  // 0 off, 1 probing 2 C_alpha, 2 probing the floor
  int guard_probes_ = 0;
  bool low_signal_ = false;
};

struct RatioSearchConfig {
  double eta_stop = 1e-9;
};

RatioEstimate estimate_ratio(ComparisonChannel& oracle, const Momdp& mdp, const Policy& benchmark,
                             const Policy& target, double c_alpha, int max_iterations);

struct RatioEstimates {
  std::vector<RatioEstimate> ratios;  // alpha_1 .. alpha_{d-1}
  double c_alpha = 0.0;
};

RatioEstimates estimate_all_ratios(ComparisonChannel& oracle, const Momdp& mdp,
                                   const DirectionalBasis& basis,
                                   const RatioSearchConfig& config = {});

/// Directional bases keyed by (instance digest, benchmark digest). Safe for
/// concurrent use; a basis is built at most once per key.
class BasisCache {
 public:
  const DirectionalBasis& get_or_build(const Momdp& mdp, const std::string& instance,
                                       const Policy& benchmark, const ValueVector& benchmark_value,
                                       double tau_rank);
  std::size_t builds() const;
  std::size_t size() const;

  /// {"<instance digest>": {"<benchmark digest>": basis, ...}, ...}
  nlohmann::json to_json(const Momdp& mdp) const;
  void merge_json(const Momdp& mdp, const nlohmann::json& document);

 private:
  mutable std::mutex mutex_;
  std::map<std::string, DirectionalBasis> bases_;  // "instance/benchmark"
  std::size_t builds_ = 0;
};

nlohmann::json basis_to_json(const Momdp& mdp, const DirectionalBasis& basis);
DirectionalBasis basis_from_json(const Momdp& mdp, const nlohmann::json& document);

}  // namespace mopref
