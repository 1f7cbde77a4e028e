#include <benchmark/benchmark.h>

#include "pdmp/flow.hpp"
#include "pdmp/hodgkin_huxley.hpp"
#include "pdmp/primal.hpp"
#include "pdmp/randomization.hpp"
#include "pdmp/rng.hpp"
#include "pdmp/simulate.hpp"

using namespace pdmp;

namespace {

hh::HHParams bench_params(int field_modes) {
  hh::HHParams p;
  p.sites = 1;
  p.site_families = {hh::Family::ChR2};
  p.gamma = 0.15;
  p.field_modes = field_modes;
  p.horizon = 5.0;
  p.kappa = 0.02;
  return p;
}

void bench_exact_flow(benchmark::State& state) {
  const auto model = hh::build_model(bench_params(static_cast<int>(state.range(0))));
  FlowEngine engine(model);
  Rng rng(derive_seed(1, "bench_flow", 0));
  Eigen::VectorXd c(model.field_modes);
  for (int k = 0; k < model.field_modes; ++k) c[k] = rng.normal();
  const SpectralField x0(c);
  for (auto _ : state) {
    benchmark::DoNotOptimize(engine.at(x0, 0, 0.0, 1.0));
  }
}
BENCHMARK(bench_exact_flow)->Arg(16)->Arg(32)->Arg(64);

void bench_rk4_duhamel_flow(benchmark::State& state) {
  const auto model = hh::build_model(bench_params(32));
  Rng rng(derive_seed(1, "bench_flow", 1));
  Eigen::VectorXd c(32);
  for (int k = 0; k < 32; ++k) c[k] = rng.normal();
  const SpectralField x0(c);
  for (auto _ : state) {
    benchmark::DoNotOptimize(integrate_flow(model, x0, 0, [](double) { return 0.0; }, 1.0,
                                            static_cast<int>(state.range(0)),
                                            FlowMethod::Rk4Duhamel));
  }
}
BENCHMARK(bench_rk4_duhamel_flow)->Arg(64)->Arg(512);

void bench_simulate_path(benchmark::State& state) {
  const auto model = hh::build_model(bench_params(32));
  const auto policy = OpenLoopPolicy::constant(1.0);
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(derive_seed(2, "bench_sim", i++));
    benchmark::DoNotOptimize(simulate(model, 0.0, model.zero_field(), 3, policy, rng));
  }
}
BENCHMARK(bench_simulate_path);

void bench_xi_path(benchmark::State& state) {
  const auto model = hh::build_model(bench_params(32));
  const auto l0 = Lambda0::uniform(static_cast<int>(model.control_grid.size()), 1.0);
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng(derive_seed(2, "bench_xi", i++));
    benchmark::DoNotOptimize(simulate_xi(model, l0, nullptr, 0.0, model.zero_field(), 3, 0.0, rng));
  }
}
BENCHMARK(bench_xi_path);

void bench_bellman_step(benchmark::State& state) {
  ToyParams p;
  p.mode_rates = {1.0, 0.6, 1.4};
  p.mode_costs = {1.0, 0.2, 0.5};
  p.controls = {0.0, 0.5, 1.0};
  const auto m = make_toy(p);
  const ValueFn zero = [](double, const SpectralField&, int) { return 0.0; };
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_T(m, zero, 0.0, m.zero_field(), 0, 128));
  }
}
BENCHMARK(bench_bellman_step);

}  // namespace

BENCHMARK_MAIN();
