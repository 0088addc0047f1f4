// Serial reference kernels against their OpenMP counterparts.
//   bench_kernels --benchmark_filter=Increments

#include <benchmark/benchmark.h>

#include "qvrl/analysis.hpp"
#include "qvrl/lq_bench.hpp"
#include "qvrl/merton_bench.hpp"
#include "qvrl/parallel.hpp"

namespace {

using namespace qvrl;

const MertonParams kPoint{3.0, 0.5, 2.0};

void IncrementsSerial(benchmark::State& state) {
  const MarketConfig m;
  for (auto _ : state)
    benchmark::DoNotOptimize(mc_increments_serial(kPoint, m, 3.0, 0.01, 2000, RngStream(1, 0)));
  state.SetItemsProcessed(state.iterations() * 2000 * 100);
}

void IncrementsParallel(benchmark::State& state) {
  const MarketConfig m;
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(mc_increments(kPoint, m, 3.0, 0.01, 2000, RngStream(1, 0), workers));
  state.SetItemsProcessed(state.iterations() * 2000 * 100);
}

void ValueSerial(benchmark::State& state) {
  const MarketConfig m;
  const auto env = merton_log_wealth_env(m);
  const auto pol = gibbs_policy(kPoint, 3.0);
  const TimeGrid grid(0.0, 1.0, 0.01);
  for (auto _ : state)
    benchmark::DoNotOptimize(risk_sensitive_value_mc_serial(
        env, pol, TdConfig{-1.0, 3.0, 0.01}, grid, 2000, RngStream(2, 0)));
  state.SetItemsProcessed(state.iterations() * 2000 * 100);
}

void ValueParallel(benchmark::State& state) {
  const MarketConfig m;
  const auto env = merton_log_wealth_env(m);
  const auto pol = gibbs_policy(kPoint, 3.0);
  const TimeGrid grid(0.0, 1.0, 0.01);
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(risk_sensitive_value_mc(env, pol, TdConfig{-1.0, 3.0, 0.01}, grid,
                                                     2000, RngStream(2, 0), workers));
  state.SetItemsProcessed(state.iterations() * 2000 * 100);
}

void LqSweep(benchmark::State& state) {
  LqSweepConfig cfg;
  cfg.horizons = {1.0, 10.0};
  cfg.epsilons = {0.0, -1.0};
  cfg.replications = 8;
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_lq_sweep(cfg, RngStream(3, 0), workers));
}

}  // namespace

BENCHMARK(IncrementsSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(IncrementsParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(ValueSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(ValueParallel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(LqSweep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
