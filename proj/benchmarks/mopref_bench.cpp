#include <random>

#include <benchmark/benchmark.h>

#include "mopref/compress.hpp"
#include "mopref/engine.hpp"
#include "mopref/experiments.hpp"
#include "mopref/trajectory.hpp"

using namespace mopref;

namespace {

GeneratedInstance instance(int states, int horizon, int k) {
  return generate_instance(11, {states, 3, horizon, k});
}

void BM_Plan(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const GeneratedInstance g = instance(n, n, 5);
  for (auto _ : state) benchmark::DoNotOptimize(scalarized_plan(g.mdp, g.preference).value);
  state.SetComplexityN(n);
}
BENCHMARK(BM_Plan)->RangeMultiplier(2)->Range(8, 64)->Complexity();

void BM_Compress(benchmark::State& state) {
  const auto n = state.range(0);
  const int k = 8;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  Eigen::MatrixXd points(k, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < k; ++i) points(i, j) = u(rng);
  std::vector<double> w(static_cast<std::size_t>(n), 1.0 / static_cast<double>(n));
  for (auto _ : state) benchmark::DoNotOptimize(c4_compress(points, w).kept.size());
  state.SetComplexityN(n);
}
BENCHMARK(BM_Compress)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oN);

void BM_ExpandCompress(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const GeneratedInstance g = instance(n, n, 5);
  const Policy p = scalarized_plan(g.mdp, g.preference).policy;
  for (auto _ : state) benchmark::DoNotOptimize(expand_compress(g.mdp, p).items.size());
}
BENCHMARK(BM_ExpandCompress)->Arg(10)->Arg(25)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_FlowDecompose(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  const GeneratedInstance g = instance(n, n, 5);
  const Policy p = scalarized_plan(g.mdp, g.preference).policy;
  for (auto _ : state) benchmark::DoNotOptimize(flow_decompose(g.mdp, p, true).items.size());
}
BENCHMARK(BM_FlowDecompose)->Arg(10)->Arg(25)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_Elicitation(benchmark::State& state) {
  const auto k = static_cast<int>(state.range(0));
  const GeneratedInstance g = instance(5, 4, k);
  ElicitationConfig config;
  config.representation = state.range(1) ? Representation::TrajectorySet : Representation::Explicit;
  for (auto _ : state) {
    SimulatedUser user(g.preference, 1e-6);
    SimulatedResponder responder(user);
    OracleSession session;
    ComparisonChannel channel(g.mdp, session, responder, config.representation);
    benchmark::DoNotOptimize(run_elicitation(g.mdp, channel, config).queries.total());
  }
}
BENCHMARK(BM_Elicitation)->ArgsProduct({{2, 3, 5, 8}, {0, 1}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
