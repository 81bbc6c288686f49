#include <benchmark/benchmark.h>

#include <random>

#include "kdsel/prune.hpp"

namespace {

using namespace kdsel;

struct PruneFixture {
  LossLedger ledger;
  LshIndex lsh;

  explicit PruneFixture(std::size_t n) : ledger(n) {
    std::mt19937_64 rng(1);
    std::lognormal_distribution<double> loss(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> feats(n, std::vector<double>(64));
    for (std::size_t i = 0; i < n; ++i) {
      ledger.record(i, loss(rng));
      for (auto& v : feats[i]) v = g(rng);
    }
    lsh = LshIndex::build(feats, 14, 2);
  }
};

void BM_PlanInfoBatch(benchmark::State& state) {
  PruneFixture f(static_cast<std::size_t>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(plan_infobatch(f.ledger, 0.8, ++seed));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PlanInfoBatch)->Arg(1000)->Arg(100000);

void BM_PlanPa(benchmark::State& state) {
  PruneFixture f(static_cast<std::size_t>(state.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(plan_pa(f.ledger, f.lsh, 0.8, 8, ++seed));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PlanPa)->Arg(1000)->Arg(100000);

void BM_LshBuild(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> feats(static_cast<std::size_t>(state.range(0)), std::vector<double>(64));
  for (auto& f : feats)
    for (auto& v : f) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(LshIndex::build(feats, 14, 4));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LshBuild)->Arg(10000);

}  // namespace
