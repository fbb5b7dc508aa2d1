#include <doctest.h>

#include <numeric>
#include <random>

#include "mopref/compress.hpp"
#include "oracles.hpp"

using namespace mopref;
using mopref::testing::uniform;

namespace {

Eigen::VectorXd mean(const Eigen::MatrixXd& points, std::span<const std::size_t> idx,
                     std::span<const double> w) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(points.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) m += w[i] * points.col(static_cast<Eigen::Index>(idx[i]));
  return m;
}

Eigen::VectorXd mean(const Eigen::MatrixXd& points, std::span<const double> w) {
  std::vector<std::size_t> all(w.size());
  std::iota(all.begin(), all.end(), 0);
  return mean(points, all, w);
}

}  // namespace

TEST_CASE("small inputs come back unchanged") {
  Eigen::MatrixXd points(2, 3);
  points << 0, 1, 2, 3, 4, 5;
  const std::vector<double> w{0.2, 0.3, 0.5};
  const Compression c = c4_compress(points, w);
  CHECK(c.kept == std::vector<std::size_t>{0, 1, 2});
  CHECK(c.weights == w);
}

TEST_CASE("square corners compress to three points with the same mean") {
  Eigen::MatrixXd points(2, 4);
  points << 0, 2, 0, 2, 0, 0, 2, 2;
  const std::vector<double> w(4, 0.25);
  const Compression c = c4_compress(points, w);
  // The symmetric null vector zeroes two corners in one step.
  CHECK(c.kept.size() <= 3);
  const Eigen::VectorXd m = mean(points, c.kept, c.weights);
  CHECK(m(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m(1) == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> skewed{0.1, 0.2, 0.3, 0.4};
  const Compression d = c4_compress(points, skewed);
  CHECK(d.kept.size() == 3);
  CHECK((mean(points, d.kept, d.weights) - mean(points, skewed)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("weights must form a simplex") {
  Eigen::MatrixXd points = Eigen::MatrixXd::Zero(1, 3);
  CHECK_THROWS_AS(c4_compress(points, std::vector<double>{0.5, 0.5, 0.5}), NotASimplex);
  CHECK_THROWS_AS(c4_compress(points, std::vector<double>{1.5, -0.5, 0.0}), NotASimplex);
  CHECK_THROWS_AS(c4_compress(points, std::vector<double>{1.0}), NotASimplex);
}

TEST_CASE("duplicate and collinear points") {
  Eigen::MatrixXd points(2, 6);
  points << 1, 1, 1, 2, 3, 4, 1, 1, 1, 2, 3, 4;
  const std::vector<double> w{0.1, 0.2, 0.1, 0.2, 0.3, 0.1};
  const Compression c = c4_compress(points, w);
  CHECK(c.kept.size() <= 3);
  CHECK((mean(points, c.kept, c.weights) - mean(points, w)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("zero-weight points are dropped") {
  Eigen::MatrixXd points(1, 4);
  points << 0, 1, 2, 3;
  const Compression c = c4_compress(points, std::vector<double>{0.0, 0.5, 0.0, 0.5});
  for (double w : c.weights) CHECK(w > kWeightFloor);
  CHECK(c.kept.size() <= 2);
}

TEST_CASE("property: random convex combinations") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = std::uniform_int_distribution<int>(1, 8)(rng);
    const int n = std::uniform_int_distribution<int>(1, 200)(rng);
    const double scale = std::pow(10.0, uniform(rng, -3, 3));
    Eigen::MatrixXd points(k, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < k; ++i) points(i, j) = scale * uniform(rng, -1, 1);
    std::vector<double> w(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& x : w) total += x = uniform(rng) < 0.1 ? 0.0 : uniform(rng);
    if (total == 0.0) w[0] = total = 1.0;
    for (auto& x : w) x /= total;

    const Compression c = c4_compress(points, w);
    CHECK(c.kept.size() <= static_cast<std::size_t>(k + 1));
    CHECK(std::is_sorted(c.kept.begin(), c.kept.end()));
    CHECK(std::adjacent_find(c.kept.begin(), c.kept.end()) == c.kept.end());
    double sum = 0.0;
    for (double x : c.weights) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    const double drift = (mean(points, c.kept, c.weights) - mean(points, w)).cwiseAbs().maxCoeff();
    CHECK(drift <= 1e-9 * std::max(1.0, scale));
  }
}
