#include <benchmark/benchmark.h>

#include "kdsel/detectors.hpp"
#include "kdsel/metrics.hpp"
#include "kdsel/synthetic.hpp"

namespace {

using namespace kdsel;

void BM_MatrixProfile(benchmark::State& state) {
  SyntheticOptions o;
  o.length = static_cast<std::size_t>(state.range(0));
  const auto s = make_synthetic_series(SyntheticFamily::MotifBreak, 0, o);
  for (auto _ : state) benchmark::DoNotOptimize(matrix_profile(s.values, 32));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatrixProfile)->RangeMultiplier(2)->Range(512, 4096)->Complexity(benchmark::oNSquared);

void BM_ScoreAll(benchmark::State& state) {
  SyntheticOptions o;
  const auto s = make_synthetic_series(SyntheticFamily::Drift, 1, o);
  DetectorParams p;
  for (auto _ : state) benchmark::DoNotOptimize(score_all(s, p));
}
BENCHMARK(BM_ScoreAll)->Unit(benchmark::kMillisecond);

void BM_AucPr(benchmark::State& state) {
  SyntheticOptions o;
  o.length = static_cast<std::size_t>(state.range(0));
  const auto s = make_synthetic_series(SyntheticFamily::Spike, 2, o);
  for (auto _ : state) benchmark::DoNotOptimize(auc_pr(s.values, s.point_labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AucPr)->Arg(1024)->Arg(65536);

}  // namespace
