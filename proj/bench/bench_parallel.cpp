// Serial vs OpenMP timings for the Monte Carlo kernels.

#include <benchmark/benchmark.h>

#include "exlab/inference.hpp"
#include "exlab/linattn.hpp"
#include "exlab/training.hpp"

using namespace exlab;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_ExcessRiskStep(benchmark::State& st) {
  const auto env = blr::BlrEnv::isotropic(4);
  const linattn::LinAttnModel m{Mat::Identity(4, 4)};
  const Vec wq = Vec::Ones(4);
  for (auto _ : st)
    benchmark::DoNotOptimize(linattn::excess_risk_step(m, env, wq, 256, 2000, RngStream(1, 0), exec_of(st)));
}

void BM_ArBootstrap(benchmark::State& st) {
  const auto env = blr::BlrEnv::isotropic(2);
  const OraclePredictive oracle(env);
  RngStream cr(2, 0);
  const auto ctx = blr::sample_trajectory(env, 8, cr);
  for (auto _ : st)
    benchmark::DoNotOptimize(
        inference::ar_bootstrap(oracle, env, ctx, 200, 200, inference::StatKind::ols, RngStream(3, 0), exec_of(st)));
}

void BM_BatchGradient(benchmark::State& st) {
  const auto env = blr::BlrEnv::isotropic(1);
  const auto model = neural::ExtModel::init(neural::ExtConfig::desk(1), 4);
  const auto batch = neural::training_batch(env, neural::TrainConfig::desk(), 0);
  for (auto _ : st)
    benchmark::DoNotOptimize(neural::batch_gradient(model, batch, env, 0.0, 1, RngStream(5, 0), exec_of(st)));
}

}  // namespace

// Arg 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_ExcessRiskStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ArBootstrap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
