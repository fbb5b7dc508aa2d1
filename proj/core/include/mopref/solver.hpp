#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>

#include "mopref/basis.hpp"
#include "mopref/momdp.hpp"
#include "mopref/oracle.hpp"

namespace mopref {

class RankDeficient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rows: V^{pi_1}, then alpha_{i-1} V^{pi_1} - V^{pi_i} for i = 2..d.
struct RatioMatrix {
  Eigen::MatrixXd rows;  // d x k
  double tau_rank = 1e-12;
};

RatioMatrix assemble_ratio_matrix(const ValueVector& benchmark_value,
                                  const DirectionalBasis& basis, std::span<const double> ratios);
RatioMatrix assemble_ratio_matrix(const ValueVector& benchmark_value,
                                  const DirectionalBasis& basis, const RatioEstimates& ratios);

enum class SolveMode { Full, Truncated };

std::string_view to_string(SolveMode mode);
std::optional<SolveMode> parse_solve_mode(std::string_view text);

struct WeightEstimate {
  Eigen::VectorXd weights;
  SolveMode mode = SolveMode::Full;
  std::optional<double> delta;
  std::size_t d = 0;        // rows available
  std::size_t d_delta = 0;  // rows used
  double residual = 0.0;    // |A x - e1|_inf on the rows used
};

/// Minimum-norm x with A x = e1, via Householder QR of A^T. Throws
/// RankDeficient when some |R_ii| <= tau_rank.
Eigen::VectorXd min_norm_solve(const Eigen::MatrixXd& rows, double tau_rank);

WeightEstimate solve_full(const RatioMatrix& matrix);

/// (min{i >= 2 : m_i <= delta}) - 1, or d when no magnitude is that small.
std::size_t truncation_rank(const DirectionalBasis& basis, double delta);

/// Minimum-norm solve on the first truncation_rank(basis, delta) rows.
WeightEstimate truncate_and_solve(const RatioMatrix& matrix, const DirectionalBasis& basis,
                                  double delta);

/// delta = k^{5/3} eta^{1/3}.
double truncation_delta(int objectives, double eta);

struct PrecisionEstimate {
  double eta = 1.0;
  int queries = 0;
  bool saturated = false;  // indistinguishable even from pi_0
  bool floored = false;    // distinguishable down to eta_min
};

struct PrecisionSearchConfig {
  double eta_min = 1e-9;
  double rel_tol = 0.01;
};

/// 1 + ceil(log2(1 / eta_min)) + ceil(log2(1 / rel_tol)).
int precision_query_cap(const PrecisionSearchConfig& config);

/// Bisection for the smallest eta at which pi_1 is still preferred over
/// (1 - eta) pi_1 + eta pi_0. The answer approximates eps / <w, V^{pi_1}>.
class PrecisionSearch {
 public:
  PrecisionSearch(Policy benchmark, Policy do_nothing, PrecisionSearchConfig config = {});

  bool done() const noexcept { return done_; }
  ComparisonRequest request() const;
  void feed(Verdict verdict);
  PrecisionEstimate result() const;

 private:
  Policy benchmark_;
  Policy do_nothing_;
  PrecisionSearchConfig config_;
  int cap_;

  double low_ = 0.0;
  double high_ = 1.0;
  double eta_ = 1.0;
  double estimate_ = 1.0;
  int queries_ = 0;
  bool done_ = false;
  bool saturated_ = false;
  bool floored_ = false;
};

PrecisionEstimate estimate_precision(ComparisonChannel& oracle, const Momdp& mdp,
                                     const Policy& benchmark,
                                     const PrecisionSearchConfig& config = {});

}  // namespace mopref
