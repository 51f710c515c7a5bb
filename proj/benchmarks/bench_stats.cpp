#include <benchmark/benchmark.h>

#include <hitl/experiments.hpp>
#include <hitl/indices.hpp>

#include <random>

namespace {

void BM_SummarizeCounts(benchmark::State &state) {
  std::mt19937 rng(1);
  std::vector<int> counts(static_cast<std::size_t>(state.range(0)));
  for (auto &c : counts)
    c = std::uniform_int_distribution<int>(0, 10)(rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(hitl::summarize_counts(counts));
}
BENCHMARK(BM_SummarizeCounts)->Arg(50)->Arg(10000);

void BM_Correlate(benchmark::State &state) {
  std::mt19937 rng(2);
  std::normal_distribution<double> g;
  auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::optional<double>> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = g(rng);
    if (i % 7 != 0)
      ys[i] = *xs[i] + g(rng);
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(hitl::correlate(xs, ys));
}
BENCHMARK(BM_Correlate)->Arg(56)->Arg(10000);

} // namespace
