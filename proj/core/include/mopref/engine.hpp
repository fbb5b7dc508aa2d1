#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mopref/basis.hpp"
#include "mopref/momdp.hpp"
#include "mopref/oracle.hpp"
#include "mopref/solver.hpp"

namespace mopref {

struct ElicitationConfig {
  SolveMode mode = SolveMode::Full;
  Representation representation = Representation::Explicit;
  double eta_stop = 1e-9;
  double eta_min = 1e-9;
  double precision_rel_tol = 0.01;
  std::optional<double> tau_rank;  // default 1e-8 sqrt(k) H
  std::optional<std::size_t> budget;
};

/// Reads "mode", "representation", "eta_stop", "eta_min", "precision_rel_tol",
/// "tau_rank" and "budget"; all optional. Throws ValidationError.
ElicitationConfig config_from_json(const nlohmann::json& document);
nlohmann::json config_to_json(const ElicitationConfig& config);

struct QueryCounts {
  std::size_t benchmark = 0;
  std::size_t ratio = 0;
  std::size_t precision = 0;

  std::size_t total() const noexcept { return benchmark + ratio + precision; }
};

/// (k-1) + (d-1) ceil(log2(4k/eta_stop)) + precision cap (truncated mode,
/// d > 1). The low-signal probes fit inside the first ratio's allowance.
std::size_t query_cap(int objectives, std::size_t d, const ElicitationConfig& config);

struct Diagnostics {
  Eigen::VectorXd preference;  // w*
  double precision = 0.0;      // eps
  double optimal = 0.0;        // v*
  double achieved = 0.0;       // <w*, V^{output}>
  double benchmark = 0.0;      // <w*, V^{pi_1}>
  double suboptimality = 0.0;
};

struct ElicitationReport {
  std::string instance;
  ElicitationConfig config;
  WeightEstimate estimate;
  std::size_t benchmark_index = 0;
  Policy benchmark;
  std::vector<RatioEstimate> ratios;
  std::vector<double> magnitudes;  // m_1 .. m_d
  std::optional<PrecisionEstimate> precision;
  Policy output_policy;
  ValueVector output_value;
  QueryCounts queries;

  bool low_signal = false;
  std::vector<std::size_t> unconverged_ratios;  // 1-based ratio indices

  std::optional<Diagnostics> diagnostics;
};

/// Resumable elicitation: benchmark tournament, ratio searches, precision
/// search (truncated mode), then the solve. Every comparison goes through
/// pending() / answer(), so the caller decides who answers and when.
class ElicitationEngine {
 public:
  ElicitationEngine(const Momdp& mdp, ElicitationConfig config, BasisCache* cache = nullptr);

  bool finished() const noexcept { return stage_ == Stage::Done; }
  /// The comparison awaiting a verdict; empty once finished.
  std::optional<ComparisonRequest> pending() const;
  void answer(Verdict verdict);
  /// Requires finished().
  const ElicitationReport& report() const;

  std::size_t answered() const noexcept { return report_.queries.total(); }
  const ElicitationConfig& config() const noexcept { return config_; }

 private:
  enum class Stage { Benchmark, Ratio, Precision, Done };

  void advance();
  void begin_ratios();
  void begin_ratio(std::size_t index);
  void finish();

  const Momdp* mdp_;
  ElicitationConfig config_;
  BasisCache* cache_;
  double tau_rank_;
  Stage stage_ = Stage::Benchmark;

  std::optional<BenchmarkSearch> benchmark_search_;
  BenchmarkSelection selection_;
  DirectionalBasis basis_;
  std::optional<RatioSearch> ratio_search_;
  std::size_t ratio_index_ = 0;
  std::optional<PrecisionSearch> precision_search_;

  ElicitationReport report_;
};

ElicitationReport run_elicitation(const Momdp& mdp, ComparisonChannel& oracle,
                                  const ElicitationConfig& config, BasisCache* cache = nullptr);

/// max over policies of <w, V^pi>: brute force when at most `brute_force_limit`
/// policies exist, otherwise the planner.
double optimal_personalized_value(const Momdp& mdp, const Eigen::VectorXd& preference,
                                  std::uint64_t brute_force_limit = 1'000'000);

void attach_diagnostics(const Momdp& mdp, ElicitationReport& report, const SimulatedUser& user,
                        double optimal);

/// Deterministic JSON: no timestamps, sorted keys.
nlohmann::json report_to_json(const Momdp& mdp, const ElicitationReport& report);

}  // namespace mopref
