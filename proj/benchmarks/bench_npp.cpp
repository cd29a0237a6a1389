#include <benchmark/benchmark.h>

#include "clborrow/npp.hpp"

using namespace clborrow;

static void BM_NppPosterior(benchmark::State& state) {
  npp::NppConfig cfg;
  cfg.w_grid = static_cast<std::size_t>(state.range(0));
  cfg.credible_interval = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(npp::npp_posterior({60, 300}, {208, 800}, cfg, 0.2));
}
BENCHMARK(BM_NppPosterior)->Args({2001, 0})->Args({2001, 1})->Args({8001, 0});
