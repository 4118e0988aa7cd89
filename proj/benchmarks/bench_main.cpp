#include <benchmark/benchmark.h>

#include "nefnet/dipole.hpp"
#include "nefnet/metrics.hpp"
#include "nefnet/training.hpp"

using namespace nef;

namespace {

std::vector<MultiViewCycle> cycles(int n) {
  DipoleDatasetOptions o;
  o.n_cycles = n;
  o.views = standard_leads(std::vector<std::string>{"II", "aVL", "V1", "I", "V3"});
  o.seed = 4;
  return generate_dipole_dataset(o);
}

const NefNet& model() {
  static const NefNet net = NefNet::initialize(ModelConfig{});
  return net;
}

void BM_EncodeView(benchmark::State& state) {
  const auto data = cycles(1);
  const auto& v = data[0].views[0];
  for (auto _ : state) benchmark::DoNotOptimize(model().encode_view(v.cycle, v.viewpoint));
}
BENCHMARK(BM_EncodeView)->Unit(benchmark::kMillisecond);

void BM_EncodeFuseThreeViews(benchmark::State& state) {
  const auto data = cycles(1);
  const std::vector<std::string> names{"II", "aVL", "V1"};
  for (auto _ : state) benchmark::DoNotOptimize(model().encode(data[0], names));
}
BENCHMARK(BM_EncodeFuseThreeViews)->Unit(benchmark::kMillisecond);

void BM_PanoramaQuery(benchmark::State& state) {
  const auto data = cycles(1);
  const auto& v = data[0].views[0];
  const auto field = model().encode_view(v.cycle, v.viewpoint);
  double phi = -3.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model().decode_view(field, {1.2, phi}));
    phi = phi > 3.0 ? -3.0 : phi + 0.1;
  }
}
BENCHMARK(BM_PanoramaQuery)->Unit(benchmark::kMillisecond);

// One optimizer step: a single epoch over exactly one batch.
void BM_TrainStep(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const auto data = cycles(batch);
  const ViewGroupSplit split{{"II", "aVL", "V1"}, {"I"}, {"V3"}};
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = batch;
  tc.standin_enabled = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(train(data, split, tc, ModelConfig{}));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainStep)->Args({8, 0})->Args({8, 1})->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto data = cycles(1);
  const auto& a = data[0].views[0].cycle.samples;
  const auto& b = data[0].views[1].cycle.samples;
  for (auto _ : state) benchmark::DoNotOptimize(ssim_1d(a, b));
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
