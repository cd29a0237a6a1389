#include <benchmark/benchmark.h>

#include "clborrow/study.hpp"

using namespace clborrow;

static void BM_SweepReferenceMean(benchmark::State& state) {
  study::SweepConfig cfg;
  cfg.include_npp = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(study::sweep_reference_mean(cfg));
}
BENCHMARK(BM_SweepReferenceMean)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_SweepReferenceSize(benchmark::State& state) {
  study::SweepConfig cfg;
  cfg.include_npp = false;
  for (auto _ : state) benchmark::DoNotOptimize(study::sweep_reference_size(cfg));
}
BENCHMARK(BM_SweepReferenceSize)->Unit(benchmark::kMillisecond);
