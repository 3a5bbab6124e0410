#include <benchmark/benchmark.h>

#include "ivcheck/kernels.hpp"
#include "ivcheck/simulation.hpp"

using namespace ivcheck;

namespace {

Eigen::MatrixXd process_root(Eigen::Index rows, Eigen::Index dim) {
  Rng rng(RngSpec{1, 0});
  Eigen::MatrixXd g(rows, dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  return g;
}

void BM_ProcessSerial(benchmark::State& state) {
  const Eigen::MatrixXd g = process_root(200, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::simulate_process_serial(g, 1000, RngSpec{2, 0}));
}

void BM_ProcessParallel(benchmark::State& state) {
  const Eigen::MatrixXd g = process_root(200, state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::simulate_process_parallel(g, 1000, RngSpec{2, 0}, 0));
}

StudyConfig bench_study() {
  StudyConfig cfg;
  cfg.dgps = {{DgpFamily::LinearIV_Power, 500, 0.0, 0.5, 0.25}};
  cfg.reps = 1;
  cfg.smoke = true;
  cfg.rng = RngSpec{3, 0};
  cfg.jobs = 0;
  return cfg;
}

void BM_StudySerial(benchmark::State& state) {
  StudyConfig cfg = bench_study();
  cfg.reps = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_study_serial(cfg));
}

void BM_StudyParallel(benchmark::State& state) {
  StudyConfig cfg = bench_study();
  cfg.reps = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_study_parallel(cfg));
}

}  // namespace

BENCHMARK(BM_ProcessSerial)->Arg(10)->Arg(26)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProcessParallel)->Arg(10)->Arg(26)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StudySerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StudyParallel)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
