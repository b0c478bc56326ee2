// Microbenchmarks for the propagation kernels. The scaling-exponent study in
// the CLI / tests uses its own harness; these are for profiling kernel-level
// changes.

#include <random>

#include <benchmark/benchmark.h>

#include "lga/baselines.hpp"
#include "lga/graph.hpp"
#include "lga/tensor.hpp"

namespace {

lga::NodeMatrix random_matrix(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  lga::NodeMatrix m(rows, cols);
  for (double& v : m.values) v = dist(rng);
  return m;
}

lga::LocalGraph random_graph(int side, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.1, 1.0);
  lga::EdgeMaps maps;
  maps.height = side;
  maps.width = side;
  const int n = side * side;
  for (int d = 0; d < lga::kNumDirections; ++d) {
    maps.pre[d].resize(n);
    maps.act[d].resize(n);
    for (int i = 0; i < n; ++i) maps.act[d][i] = dist(rng);
  }
  return lga::normalize_adjacency(lga::assemble_adjacency(maps, side, side),
                                  1e-6);
}

void BM_MessagePass(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const int channels = 32;
  const lga::LocalGraph graph = random_graph(side, 1);
  const lga::NodeMatrix x = random_matrix(side * side, channels, 2);
  for (auto _ : state) {
    lga::NodeMatrix out = lga::message_pass(x, graph);
    benchmark::DoNotOptimize(out.values.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(graph.entry_count()) * channels);
}
BENCHMARK(BM_MessagePass)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

void BM_CrissCrossCore(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const int channels = 32;
  const int n = side * side;
  const lga::NodeMatrix q = random_matrix(n, channels, 3);
  const lga::NodeMatrix k = random_matrix(n, channels, 4);
  const lga::NodeMatrix v = random_matrix(n, channels, 5);
  for (auto _ : state) {
    lga::NodeMatrix out = lga::crisscross_attention_core(q, k, v, side, side);
    benchmark::DoNotOptimize(out.values.data());
  }
}
BENCHMARK(BM_CrissCrossCore)->Arg(16)->Arg(32)->Arg(64);

void BM_DenseCore(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const int channels = 32;
  const int n = side * side;
  const lga::NodeMatrix q = random_matrix(n, channels, 3);
  const lga::NodeMatrix k = random_matrix(n, channels, 4);
  const lga::NodeMatrix v = random_matrix(n, channels, 5);
  for (auto _ : state) {
    lga::NodeMatrix out = lga::dense_attention_core(q, k, v);
    benchmark::DoNotOptimize(out.values.data());
  }
}
BENCHMARK(BM_DenseCore)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
