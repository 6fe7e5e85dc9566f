#include <benchmark/benchmark.h>

#include <map>

#include "osmac/covariates.hpp"
#include "osmac/ingest.hpp"
#include "osmac/model.hpp"
#include "osmac/probabilities.hpp"
#include "osmac/sampler.hpp"

using namespace osmac;

namespace {

const Dataset& data_for(std::size_t n) {
  static std::map<std::size_t, Dataset> cache;
  auto it = cache.find(n);
  if (it == cache.end())
    it = cache.emplace(n, generate(CovariateKind::MzNormal, n, ParamVector::Constant(7, 0.5), 1)).first;
  return it->second;
}

void BM_Logistic(benchmark::State& state) {
  double eta = -30.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(logistic(eta));
    eta = eta > 30.0 ? -30.0 : eta + 0.001;
  }
}
BENCHMARK(BM_Logistic);

void BM_Evaluate(benchmark::State& state) {
  const Dataset& d = data_for(static_cast<std::size_t>(state.range(0)));
  WeightedData w{d.x, d.y, Vector::Ones(d.y.size())};
  const ParamVector beta = ParamVector::Constant(7, 0.4);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(w.view(), beta, true));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Evaluate)->Arg(10000)->Arg(100000);

void BM_ComputePiOs(benchmark::State& state) {
  MemorySource mem(data_for(static_cast<std::size_t>(state.range(0))));
  const ParamVector beta = ParamVector::Constant(7, 0.4);
  for (auto _ : state) benchmark::DoNotOptimize(compute_pi_os(mem, beta, HChoice::norm()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ComputePiOs)->Arg(100000);

void BM_DrawIndexes(benchmark::State& state) {
  MemorySource mem(data_for(100000));
  const ProbabilityVector pv = compute_pi_os(mem, ParamVector::Constant(7, 0.4), HChoice::norm());
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(draw_indexes_with_replacement(pv.probs, static_cast<std::size_t>(state.range(0)), ++seed));
}
BENCHMARK(BM_DrawIndexes)->Arg(1000)->Arg(10000);

void BM_PoissonScan(benchmark::State& state) {
  MemorySource mem(data_for(100000));
  const ParamVector beta = ParamVector::Constant(7, 0.4);
  const ProbabilityVector pv = compute_pi_os(mem, beta, HChoice::norm());
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(poisson_scan(mem, beta, pv.normalizer / 100000.0, HChoice::norm(), 1000.0, ++seed));
  state.SetItemsProcessed(state.iterations() * 100000);
}
BENCHMARK(BM_PoissonScan);

}  // namespace

BENCHMARK_MAIN();
