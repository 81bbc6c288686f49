#include <benchmark/benchmark.h>

#include <cmath>
#include <numeric>

#include "kdsel/pipeline.hpp"

namespace {

using namespace kdsel;

std::vector<double> test_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::sin(0.3 * static_cast<double>(i));
  z_normalize(w);
  return w;
}

void BM_Forward(benchmark::State& state) {
  ModelShape shape;
  shape.encoder = static_cast<EncoderKind>(state.range(0));
  shape.text_dim = 0;
  const auto model = SelectorModel::create(shape, 1);
  const auto w = test_window(shape.window);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, w));
  state.SetLabel(std::string(encoder_name(shape.encoder)));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1);

void BM_BatchObjective(benchmark::State& state) {
  TrainConfig config;
  config.encoder = static_cast<EncoderKind>(state.range(0));
  config.pisl = true;
  config.mki = true;
  const auto model = SelectorModel::create(model_shape_for(config, config.text_dim), 2);
  std::vector<TrainingSample> samples(config.batch_size);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].values = test_window(config.window);
    samples[i].values[i % config.window] += 2.0;
    samples[i].hard_label = static_cast<int>(i % kNumDetectors);
    samples[i].soft.assign(kNumDetectors, 1.0 / kNumDetectors);
    samples[i].text.assign(config.text_dim, 0.0);
    samples[i].text[i % config.text_dim] = 1.0;
  }
  std::vector<std::size_t> ids(samples.size());
  std::iota(ids.begin(), ids.end(), 0);
  const std::vector<double> rescale(samples.size(), 1.0);
  Gradients grads(model);
  for (auto _ : state) {
    grads.zero();
    benchmark::DoNotOptimize(batch_objective(model, samples, ids, rescale, config, &grads));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples.size()));
  state.SetLabel(std::string(encoder_name(config.encoder)));
}
BENCHMARK(BM_BatchObjective)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
