#include <benchmark/benchmark.h>

#include "twostage/box_qp.hpp"
#include "twostage/design_compare.hpp"
#include "twostage/simulation.hpp"

using namespace twostage;

namespace {

PowerSimulation power_case() {
  PowerSimulation sim;
  sim.power.p = {0.25, 0.5, 0.75};
  sim.power.q = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  sim.power.n = 20;
  sim.power.r = 0.4;
  sim.power.rho = 0.3;
  sim.power.mu = 0.5;
  sim.clusters = 60;
  sim.kind = EffectKind::SE;
  sim.scheme = EffectScheme::SeAlt;
  sim.reps = 400;
  return sim;
}

struct CompareCase {
  NoInterferencePopulation pop;
  DesignSpec spec;
};

CompareCase compare_case() {
  PowerConfig cfg;
  cfg.p = {0.5};
  cfg.q = {1.0};
  cfg.n = 10;
  cfg.r = 0.3;
  auto dgp = dgp_from_power(cfg, 30);
  dgp.theta = Eigen::Vector2d(0.5, 0.0);
  Rng rng = make_stream(1, 0);
  return {population_from_table(generate_potential_outcomes(dgp, rng)),
          make_design({10, 10, 10}, std::vector<int>(30, 10), {0.3, 0.5, 0.7})};
}

void BM_PowerSerial(benchmark::State& state) {
  const auto sim = power_case();
  for (auto _ : state) benchmark::DoNotOptimize(estimate_power_serial(sim).power);
}

void BM_PowerParallel(benchmark::State& state) {
  const auto sim = power_case();
  for (auto _ : state) benchmark::DoNotOptimize(estimate_power(sim).power);
}

void BM_RandomizationSerial(benchmark::State& state) {
  const auto c = compare_case();
  for (auto _ : state) {
    benchmark::DoNotOptimize(randomization_variances_serial(c.pop, c.spec, 5000).two_stage);
  }
}

void BM_RandomizationParallel(benchmark::State& state) {
  const auto c = compare_case();
  for (auto _ : state) {
    benchmark::DoNotOptimize(randomization_variances(c.pop, c.spec, 5000).two_stage);
  }
}

void BM_MinQuadraticOnS(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  Eigen::MatrixXd A = Eigen::MatrixXd::Random(k, k);
  const Eigen::MatrixXd M = A * A.transpose() + Eigen::MatrixXd::Identity(k, k);
  for (auto _ : state) benchmark::DoNotOptimize(min_quadratic_on_S(M).value);
}

}  // namespace

BENCHMARK(BM_PowerSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PowerParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RandomizationSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RandomizationParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MinQuadraticOnS)->Arg(4)->Arg(8)->Arg(16)->UseRealTime();

BENCHMARK_MAIN();
