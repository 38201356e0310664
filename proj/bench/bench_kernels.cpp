#include "waitcast/cluster.hpp"
#include "waitcast/synth.hpp"
#include "waitcast/trees.hpp"

#include <benchmark/benchmark.h>

using namespace waitcast;

namespace {

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

void BM_DistanceMatrix(benchmark::State& state) {
  const auto n = state.range(1);
  const auto data = random_matrix(n, 48, 1);
  std::vector<std::string> ids;
  for (Eigen::Index i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  for (auto _ : state) benchmark::DoNotOptimize(distance_matrix(data, ids, mode(state)));
}
BENCHMARK(BM_DistanceMatrix)->ArgsProduct({{0, 1}, {12, 96, 384}});

void BM_GenerateCohort(benchmark::State& state) {
  CohortConfig cfg;
  cfg.n_children = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(generate_cohort(cfg, mode(state)));
}
BENCHMARK(BM_GenerateCohort)->ArgsProduct({{0, 1}, {12, 200}});

void BM_RandomForest(benchmark::State& state) {
  const auto X = random_matrix(48, 10, 2);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < X.rows(); ++i) y.push_back(X(i, 0) > 0 ? (X(i, 1) > 0 ? 2 : 1) : 0);
  ForestConfig cfg;
  cfg.n_trees = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(rf_fit(X, y, cfg, mode(state)));
}
BENCHMARK(BM_RandomForest)->ArgsProduct({{0, 1}, {50, 200}})->Unit(benchmark::kMillisecond);

void BM_Boosting(benchmark::State& state) {
  const auto X = random_matrix(48, 10, 3);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) y(i) = static_cast<double>(i % 6);
  BoostConfig cfg;
  cfg.n_rounds = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(xgb_fit(X, y, cfg, mode(state)));
}
BENCHMARK(BM_Boosting)->ArgsProduct({{0, 1}, {20, 100}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
