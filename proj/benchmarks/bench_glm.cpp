#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "clborrow/composite_glm.hpp"

using namespace clborrow;

namespace {

std::vector<glm::DesignRow> design(std::size_t n, std::size_t p, double w) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::vector<glm::DesignRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    r.x.push_back(1.0);
    double eta = -0.5;
    for (std::size_t j = 1; j < p; ++j) {
      r.x.push_back(normal(rng));
      eta += 0.3 * r.x.back();
    }
    r.y = unif(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
    r.is_target = i % 3 == 0;
    r.weight = r.is_target ? 1.0 : w;
  }
  return rows;
}

void BM_FitWeightedLogistic(benchmark::State& state) {
  const auto rows = design(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)), 0.6);
  for (auto _ : state) benchmark::DoNotOptimize(glm::fit_weighted_logistic(rows));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitWeightedLogistic)->Args({450, 5})->Args({5000, 5})->Args({50000, 8});

void BM_GlmClrt(benchmark::State& state) {
  const auto rows = design(static_cast<std::size_t>(state.range(0)), 5, 0.6);
  const auto fit = glm::fit_weighted_logistic(rows);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  for (auto _ : state) benchmark::DoNotOptimize(glm::glm_clrt(rows, fit, {1}, zero));
}
BENCHMARK(BM_GlmClrt)->Arg(450)->Arg(5000);

}  // namespace
