#include <benchmark/benchmark.h>

#include "levy_sysid/ecf_iid.hpp"
#include "levy_sysid/ecf_system.hpp"
#include "levy_sysid/linear_system.hpp"
#include "levy_sysid/noise_models.hpp"
#include "levy_sysid/pe_estimator.hpp"

namespace ls = levy_sysid;

namespace {

ls::SystemParams arma11() {
  ls::SystemParams s;
  s.ar = Eigen::VectorXd::Constant(1, -0.5);
  s.ma = Eigen::VectorXd::Constant(1, 0.3);
  return s;
}

const ls::NoiseParams kMixture = ls::NoiseParams::gaussian_mixture(0.9, 0.1, 3.0);

void BM_CfVarianceGamma(benchmark::State& state) {
  const auto m = ls::NoiseParams::variance_gamma(1.0, 0.5, 0.3);
  double u = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ls::cf(m, u));
    u += 1e-6;
  }
}
BENCHMARK(BM_CfVarianceGamma);

void BM_CfCgmy(benchmark::State& state) {
  const auto m = ls::NoiseParams::cgmy(1.0, 5.0, 8.0, 0.5);
  double u = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ls::cf(m, u));
    u += 1e-6;
  }
}
BENCHMARK(BM_CfCgmy);

void BM_Innovations(benchmark::State& state) {
  const auto sys = arma11();
  const Eigen::VectorXd dy = ls::simulate(sys, ls::sample_increments(kMixture, state.range(0), 1));
  const int order = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(ls::innovations(sys, dy, order));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Innovations)->Args({50000, 0})->Args({50000, 1})->Args({50000, 2});

void BM_PeEstimate(benchmark::State& state) {
  const auto sys = arma11();
  const Eigen::VectorXd dy = ls::simulate(sys, ls::sample_increments(kMixture, 50500, 2));
  for (auto _ : state) benchmark::DoNotOptimize(ls::pe_estimate(dy, sys));
}
BENCHMARK(BM_PeEstimate)->Unit(benchmark::kMillisecond);

void BM_EcfIid(benchmark::State& state) {
  const Eigen::VectorXd x = ls::sample_increments(kMixture, 50000, 3);
  const auto grid = ls::log_grid(0.15, 20.0, 8);
  for (auto _ : state) benchmark::DoNotOptimize(ls::ecf_iid_estimate(x, grid, kMixture));
}
BENCHMARK(BM_EcfIid)->Unit(benchmark::kMillisecond);

void BM_Stage3Scores(benchmark::State& state) {
  const auto sys = arma11();
  const Eigen::VectorXd dy = ls::simulate(sys, ls::sample_increments(kMixture, 50500, 4));
  const auto grid = ls::default_grid(kMixture, state.range(0)).conjugate_closure();
  for (auto _ : state) benchmark::DoNotOptimize(ls::stage3_scores(dy, sys, kMixture, grid).mean);
}
BENCHMARK(BM_Stage3Scores)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

void BM_Stage3Estimate(benchmark::State& state) {
  const auto sys = arma11();
  const Eigen::VectorXd dy = ls::simulate(sys, ls::sample_increments(kMixture, 50500, 5));
  const auto grid = ls::default_grid(kMixture, 40);
  const Eigen::MatrixXd r = ls::r_p_star_exact(sys, ls::moments(kMixture).variance);
  for (auto _ : state) benchmark::DoNotOptimize(ls::stage3_estimate(dy, sys, kMixture, grid, r));
}
BENCHMARK(BM_Stage3Estimate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
