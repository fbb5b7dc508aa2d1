#include "mopref/solver.hpp"

#include <cmath>

#include <Eigen/QR>

namespace mopref {

RatioMatrix assemble_ratio_matrix(const ValueVector& benchmark_value,
                                  const DirectionalBasis& basis, std::span<const double> ratios) {
  const std::size_t d = basis.dimension();
  if (d == 0) throw std::invalid_argument("basis is empty");
  if (ratios.size() + 1 != d)
    throw std::invalid_argument("expected " + std::to_string(d - 1) + " ratios, got " +
                                std::to_string(ratios.size()));
  const Eigen::Index k = benchmark_value.size();
  RatioMatrix out;
  out.tau_rank = basis.tau_rank;
  out.rows.resize(static_cast<Eigen::Index>(d), k);
  out.rows.row(0) = benchmark_value.transpose();
  for (std::size_t i = 1; i < d; ++i) {
    const ValueVector& v = basis.entries[i].value;
    if (v.size() != k) throw std::invalid_argument("basis value dimension mismatch");
    out.rows.row(static_cast<Eigen::Index>(i)) = (ratios[i - 1] * benchmark_value - v).transpose();
  }
  return out;
}

RatioMatrix assemble_ratio_matrix(const ValueVector& benchmark_value,
                                  const DirectionalBasis& basis, const RatioEstimates& ratios) {
  std::vector<double> alphas;
  for (const auto& r : ratios.ratios) alphas.push_back(r.alpha);
  return assemble_ratio_matrix(benchmark_value, basis, alphas);
}

std::string_view to_string(SolveMode mode) {
  return mode == SolveMode::Full ? "full" : "truncated";
}

std::optional<SolveMode> parse_solve_mode(std::string_view text) {
  if (text == "full") return SolveMode::Full;
  if (text == "truncated") return SolveMode::Truncated;
  return std::nullopt;
}

Eigen::VectorXd min_norm_solve(const Eigen::MatrixXd& rows, double tau_rank) {
  const Eigen::Index d = rows.rows();
  const Eigen::Index k = rows.cols();
  if (d == 0 || d > k) throw RankDeficient("need between 1 and k rows");
  // A^T = Q R, so A x = e1 becomes R^T (Q^T x) = e1; the minimum-norm x has
  // Q^T x supported on the first d coordinates.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(rows.transpose());
  const Eigen::MatrixXd r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(std::abs(r(i, i)) > tau_rank))
      throw RankDeficient("ratio matrix row " + std::to_string(i + 1) + " is dependent");
  Eigen::VectorXd y = r.transpose().triangularView<Eigen::Lower>().solve(
      Eigen::VectorXd::Unit(d, 0));
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(k);
  padded.head(d) = y;
  return qr.householderQ() * padded;
}

namespace {

WeightEstimate solve_rows(const RatioMatrix& matrix, Eigen::Index used) {
  WeightEstimate out;
  const Eigen::MatrixXd rows = matrix.rows.topRows(used);
  out.weights = min_norm_solve(rows, matrix.tau_rank);
  out.d = static_cast<std::size_t>(matrix.rows.rows());
  out.d_delta = static_cast<std::size_t>(used);
  out.residual =
      (rows * out.weights - Eigen::VectorXd::Unit(used, 0)).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace

WeightEstimate solve_full(const RatioMatrix& matrix) {
  return solve_rows(matrix, matrix.rows.rows());
}

std::size_t truncation_rank(const DirectionalBasis& basis, double delta) {
  for (std::size_t i = 1; i < basis.entries.size(); ++i)
    if (basis.entries[i].magnitude <= delta) return i;
  return basis.entries.size();
}

WeightEstimate truncate_and_solve(const RatioMatrix& matrix, const DirectionalBasis& basis,
                                  double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (static_cast<std::size_t>(matrix.rows.rows()) != basis.dimension())
    throw std::invalid_argument("matrix and basis disagree on d");
  WeightEstimate out =
      solve_rows(matrix, static_cast<Eigen::Index>(truncation_rank(basis, delta)));
  out.mode = SolveMode::Truncated;
  out.delta = delta;
  return out;
}

double truncation_delta(int objectives, double eta) {
  return std::pow(static_cast<double>(objectives), 5.0 / 3.0) * std::cbrt(eta);
}

// ---------------------------------------------------------------------------

int precision_query_cap(const PrecisionSearchConfig& config) {
  return 1 + static_cast<int>(std::ceil(std::log2(1.0 / config.eta_min))) +
         static_cast<int>(std::ceil(std::log2(1.0 / config.rel_tol)));
}

PrecisionSearch::PrecisionSearch(Policy benchmark, Policy do_nothing, PrecisionSearchConfig config)
    : benchmark_(std::move(benchmark)),
      do_nothing_(std::move(do_nothing)),
      config_(config),
      cap_(precision_query_cap(config)) {
  if (!(config.eta_min > 0.0 && config.eta_min < 1.0))
    throw std::invalid_argument("eta_min must lie in (0, 1)");
  if (!(config.rel_tol > 0.0 && config.rel_tol < 1.0))
    throw std::invalid_argument("rel_tol must lie in (0, 1)");
}

ComparisonRequest PrecisionSearch::request() const {
  if (done_) throw std::logic_error("precision search is finished");
  return {Phase::Precision, MixturePolicy(benchmark_),
          MixturePolicy({{1.0 - eta_, benchmark_}, {eta_, do_nothing_}})};
}

void PrecisionSearch::feed(Verdict verdict) {
  if (done_) throw std::logic_error("precision search is finished");
  ++queries_;
  const bool separated = verdict == Verdict::PreferLeft;
  if (queries_ == 1 && !separated) {
    saturated_ = true;
    estimate_ = 1.0;
    done_ = true;
    return;
  }
  if (separated)
    high_ = eta_;
  else
    low_ = eta_;

  if (high_ <= config_.eta_min) {
    floored_ = true;
    estimate_ = config_.eta_min;
    done_ = true;
  } else if (low_ > 0.0 && high_ - low_ <= config_.rel_tol * low_) {
    estimate_ = 0.5 * (low_ + high_);
    done_ = true;
  } else if (queries_ >= cap_) {
    estimate_ = std::max(0.5 * (low_ + high_), config_.eta_min);
    done_ = true;
  } else {
    eta_ = 0.5 * (low_ + high_);
  }
}

PrecisionEstimate PrecisionSearch::result() const {
  return {estimate_, queries_, saturated_, floored_};
}

PrecisionEstimate estimate_precision(ComparisonChannel& oracle, const Momdp& mdp,
                                     const Policy& benchmark,
                                     const PrecisionSearchConfig& config) {
  PrecisionSearch search(benchmark, do_nothing_policy(mdp), config);
  while (!search.done()) search.feed(oracle.compare(search.request()));
  return search.result();
}

}  // namespace mopref
