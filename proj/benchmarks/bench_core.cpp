#include <benchmark/benchmark.h>

#include <random>

#include "sotta/esm.hpp"
#include "sotta/memory_bank.hpp"
#include "sotta/sweep.hpp"

using namespace sotta;

namespace {

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = n(rng);
  return t;
}

void BM_Forward(benchmark::State& state) {
  const Network net = init_network(NetworkSpec{}, 1);
  const Tensor x = random_batch(static_cast<std::size_t>(state.range(0)), 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, x).logits);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(64);

void BM_EntropyGradient(benchmark::State& state) {
  const Network net = init_network(NetworkSpec{}, 1);
  const Tensor x = random_batch(64, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(entropy_gradient(net, x).loss);
}
BENCHMARK(BM_EntropyGradient);

void BM_EsmStep(benchmark::State& state) {
  Network net = init_network(NetworkSpec{}, 1);
  const Tensor x = random_batch(64, 16, 2);
  AdamState adam;
  EsmConfig cfg;
  cfg.lr = 0.0;  // keep the workload fixed across iterations
  for (auto _ : state) benchmark::DoNotOptimize(esm_step(net, x, cfg, adam).loss);
}
BENCHMARK(BM_EsmStep);

void BM_MaybeInsert(benchmark::State& state) {
  MemoryBank bank(64, 4, 1);
  const Tensor x = random_batch(1, 16, 3);
  std::mt19937_64 rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(bank.maybe_insert(x, static_cast<int>(rng() % 4), 0.999, 0.99));
}
BENCHMARK(BM_MaybeInsert);

void BM_RunStream(benchmark::State& state) {
  const RunConfig cfg;
  const Network net = pretrain_from_config(cfg);
  ScenarioConfig sc;
  sc.scenario = Scenario::kNoise;
  const auto stream = build_stream(benchmark_for(cfg), sc, stream_seeds(0), net);
  const MethodConfig method = cfg.method_config("sotta");
  for (auto _ : state) benchmark::DoNotOptimize(run_stream(net, stream, method, 0).benign_accuracy);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(stream.size()));
}
BENCHMARK(BM_RunStream)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
