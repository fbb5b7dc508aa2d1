#include "mopref/compress.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace mopref {

Compression c4_compress(const Eigen::MatrixXd& points, std::span<const double> weights) {
  const auto n = static_cast<std::size_t>(points.cols());
  const Eigen::Index k = points.rows();
  if (weights.size() != n) throw NotASimplex("one weight per point required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw NotASimplex("weights must be finite and nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw NotASimplex("weights sum to " + std::to_string(total) + ", not 1");

  std::vector<double> p(weights.begin(), weights.end());
  std::vector<std::size_t> alive;
  alive.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (p[i] > kWeightFloor) alive.push_back(i);

  // The working batch holds the first k+2 surviving points in index order;
  // survivors always precede the refill cursor, so appending keeps it sorted.
  const auto batch = static_cast<std::size_t>(k + 2);
  std::vector<std::size_t> work;
  work.reserve(batch);
  std::size_t cursor = 0;
  auto refill = [&] {
    while (work.size() < batch && cursor < alive.size()) work.push_back(alive[cursor++]);
  };
  refill();

  Eigen::MatrixXd lifted_t(k + 2, k + 1);
  Eigen::VectorXd last_unit = Eigen::VectorXd::Unit(k + 2, k + 1);
  while (work.size() == batch) {
    // Rows of lifted_t are the lifted points (mu_i, 1); the last column of Q
    // in its QR factorization spans part of the null space of lifted_t^T.
    for (std::size_t r = 0; r < batch; ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      lifted_t.row(row).head(k) = points.col(static_cast<Eigen::Index>(work[r])).transpose();
      lifted_t(row, k) = 1.0;
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(lifted_t);
    Eigen::VectorXd x = qr.householderQ() * last_unit;

    std::size_t i0 = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < batch; ++r) {
      const double ratio = std::abs(x(static_cast<Eigen::Index>(r))) / p[work[r]];
      if (ratio > best) {
        best = ratio;
        i0 = r;
      }
    }
    if (x(static_cast<Eigen::Index>(i0)) < 0.0) x = -x;
    const double gamma = p[work[i0]] / x(static_cast<Eigen::Index>(i0));
    for (std::size_t r = 0; r < batch; ++r) p[work[r]] -= gamma * x(static_cast<Eigen::Index>(r));
    p[work[i0]] = 0.0;

    std::erase_if(work, [&](std::size_t i) { return !(p[i] > kWeightFloor); });
    refill();
  }

  Compression out;
  out.kept = work;
  out.weights.reserve(work.size());
  for (std::size_t i : work) out.weights.push_back(p[i]);
  return out;
}

}  // namespace mopref
