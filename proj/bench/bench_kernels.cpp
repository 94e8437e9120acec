// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>
#include <random>

#include "cpreg/conformal.hpp"
#include "cpreg/difficulty.hpp"
#include "cpreg/neighbors.hpp"

using namespace cpreg;

namespace {

struct Data {
  std::shared_ptr<const NeighborIndex> index;
  std::vector<double> queries;
  std::vector<double> preds;
  std::vector<double> residuals;
  std::vector<double> sigmas;
};

const Data& data() {
  static const Data d = [] {
    constexpr std::size_t n = 5000, q = 2000, dim = 8;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    std::vector<double> pts(n * dim), targets(n), res(n);
    for (auto& v : pts) v = z(rng);
    for (auto& v : targets) v = z(rng);
    for (auto& v : res) v = std::abs(z(rng));
    Data out;
    out.index = std::make_shared<const NeighborIndex>(
        Scaler{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}, pts, targets, res);
    out.queries.resize(q * dim);
    for (auto& v : out.queries) v = z(rng);
    out.preds.resize(q);
    for (auto& v : out.preds) v = z(rng);
    out.residuals = res;
    out.sigmas.resize(q);
    for (auto& v : out.sigmas) v = 0.1 + std::abs(z(rng));
    return out;
  }();
  return d;
}

Execution exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Execution::serial : Execution::parallel;
}

void BM_KnnQueryBatch(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) {
    benchmark::DoNotOptimize(knn_query_batch(*d.index, d.queries, 20, exec_of(state)));
  }
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

void BM_EstimateBatch(benchmark::State& state) {
  const auto& d = data();
  const auto fitted = fit_estimator({EstimatorKind::knn_target_std, 20, kDefaultBeta}, d.index);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_batch(fitted, d.queries, d.preds, exec_of(state)));
  }
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

void BM_CpsIntervals(benchmark::State& state) {
  const auto& d = data();
  std::vector<double> sig(d.residuals.size(), 1.0);
  const auto cps = fit_cps(d.residuals, sig);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cps_intervals(cps, d.preds, d.sigmas, {}, 0.9, exec_of(state)));
  }
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

}  // namespace

BENCHMARK(BM_KnnQueryBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EstimateBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CpsIntervals)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
