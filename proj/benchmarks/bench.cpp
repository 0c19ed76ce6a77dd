#include <benchmark/benchmark.h>

#include "uniflow/fft.hpp"
#include "uniflow/model.hpp"
#include "uniflow/partition.hpp"
#include "uniflow/rng.hpp"
#include "uniflow/synth.hpp"
#include "uniflow/train.hpp"

namespace {

using namespace uniflow;

void BM_Fft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  std::vector<fft::Complex> x(n);
  for (auto& v : x) v = {rng.normal(), rng.normal()};
  for (auto _ : state) {
    auto y = x;
    fft::transform(y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Fft)->RangeMultiplier(4)->Range(16, 4096)->Complexity(benchmark::oNLogN);

void BM_Partition(benchmark::State& state) {
  synth::SynthConfig cfg;
  cfg.T = 48;
  const FlowDataset ds = synth::gen_graph(cfg, static_cast<std::size_t>(state.range(0)), 4.0);
  for (auto _ : state) benchmark::DoNotOptimize(partition::partition_kway(*ds.topology, 16));
}
BENCHMARK(BM_Partition)->Arg(128)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_PredictGrid(benchmark::State& state) {
  const TaskSpec task{12, 12};
  const auto st = model::init_model(patching::PatchConfig::desk(), model::ModelConfig::desk(), task, 1);
  synth::SynthConfig cfg;
  cfg.T = 200;
  const FlowDataset raw = synth::gen_grid(cfg, 16, 16);
  const auto ds = train::prepare(raw, st.patch, task);
  const auto w = ds.window(ds.test_starts.front(), 0, task);
  const auto ctx = ds.context();
  for (auto _ : state) benchmark::DoNotOptimize(model::predict(st, w, ctx));
}
BENCHMARK(BM_PredictGrid)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
