#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mopref/engine.hpp"
#include "mopref/momdp.hpp"
#include "mopref/oracle.hpp"

namespace mopref {

struct InstanceDims {
  int states = 1;
  int actions = 1;  // excluding the do-nothing action
  int horizon = 1;
  int objectives = 1;
};

struct GeneratedInstance {
  Momdp mdp;
  Eigen::VectorXd preference;  // |w|_2 in [1, 2]
};

/// Deterministic in `seed`. States s0..s{S-1}, actions a0 (do nothing, only at
/// s0) and a1..aA; dense transition rows from normalized uniform draws;
/// rewards uniform in [0, 1]^k.
GeneratedInstance generate_instance(std::uint64_t seed, const InstanceDims& dims);

/// Inclusive range [low, high] for one dimension.
struct DimRange {
  int low = 1;
  int high = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int trials = 1;
  DimRange states{5, 5};
  DimRange actions{3, 3};
  DimRange horizon{4, 4};
  DimRange objectives{3, 3};
  std::vector<double> epsilons{1e-2, 1e-4, 1e-6};
  ElicitationConfig elicitation;
  bool validate_payloads = false;
};

/// Keys: seed, trials, states, actions, horizon, objectives (int or
/// [low, high]), epsilons, mode, representation, validate_payloads, plus the
/// optional elicitation tolerances. Throws ValidationError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& document);

/// Seed of trial `index` derived from the master seed.
std::uint64_t trial_seed(std::uint64_t master, std::uint64_t index);
/// Dimensions of trial `index`, drawn from the configured ranges.
InstanceDims trial_dims(const ExperimentConfig& config, std::uint64_t index);

struct TrialRow {
  std::uint64_t seed = 0;
  int trial = 0;
  InstanceDims dims;
  double epsilon = 0.0;
  QueryCounts queries;
  std::size_t query_cap = 0;
  double optimal = 0.0;
  double achieved = 0.0;
  double benchmark = 0.0;
  double suboptimality = 0.0;
  std::size_t d = 0;
  std::size_t d_delta = 0;
  bool low_signal = false;
  std::size_t unconverged = 0;
  std::size_t payload_failures = 0;
  double wall_ms = 0.0;

  double relative_suboptimality() const;
};

struct TrialResult {
  TrialRow row;
  ElicitationReport report;
  std::vector<TranscriptRecord> transcript;
};

/// One simulated elicitation at precision `epsilon`.
TrialResult run_trial(const Momdp& mdp, const Eigen::VectorXd& preference, double epsilon,
                      const ElicitationConfig& config, bool validate_payloads = false);

/// Every trial of the config, each instance shared across the epsilon grid.
/// Rows are sorted by (trial, epsilon descending).
std::vector<TrialRow> run_experiment(const ExperimentConfig& config);

struct EpsilonSummary {
  double epsilon = 0.0;
  std::size_t rows = 0;
  double median_suboptimality = 0.0;
  double q25_suboptimality = 0.0;
  double q75_suboptimality = 0.0;
  double median_relative = 0.0;
  double median_queries = 0.0;
  std::size_t max_queries = 0;
  bool within_cap = true;
};

struct ExperimentSummary {
  std::vector<EpsilonSummary> by_epsilon;  // epsilon descending
  bool monotone = true;  // median suboptimality nonincreasing as epsilon shrinks
};

/// Linear-interpolation quantile of unsorted values; q in [0, 1].
double quantile(std::vector<double> values, double q);

ExperimentSummary aggregate(const std::vector<TrialRow>& rows);

inline constexpr int kCsvSchemaVersion = 1;

/// Deterministic: excludes wall time.
void write_trials_csv(std::ostream& out, const std::vector<TrialRow>& rows);
void write_timings_csv(std::ostream& out, const std::vector<TrialRow>& rows);
void write_summary_csv(std::ostream& out, const ExperimentSummary& summary);
void write_summary_table(std::ostream& out, const ExperimentSummary& summary);

}  // namespace mopref
