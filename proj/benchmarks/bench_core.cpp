#include <benchmark/benchmark.h>

#include "tdt/dss.hpp"
#include "tdt/surrogate.hpp"

using namespace tdt;

static void BM_IntegrateRk4(benchmark::State& state) {
  const auto p = pbpk::reference_patient();
  for (auto _ : state) {
    auto t = pbpk::integrate(p, {1480, 0, 0, 0}, 72.0, 0.1, pbpk::Method::rk4);
    benchmark::DoNotOptimize(t.states.back());
  }
}
BENCHMARK(BM_IntegrateRk4);

static void BM_IntegrateRk45(benchmark::State& state) {
  const auto p = pbpk::reference_patient();
  for (auto _ : state) {
    auto t = pbpk::integrate(p, {1480, 0, 0, 0}, 72.0, 0.1, pbpk::Method::rk45);
    benchmark::DoNotOptimize(t.states.back());
  }
}
BENCHMARK(BM_IntegrateRk45);

static void BM_LossAndGradient(benchmark::State& state) {
  const auto p = pbpk::reference_patient();
  surrogate::TrainConfig cfg;
  cfg.t_batch = surrogate::power_collocation(72.0, static_cast<std::size_t>(state.range(0)), 1.5);
  const auto loss = surrogate::make_total_loss(p, {1, 0, 0, 0}, p.volumes[0], cfg);
  const auto net = surrogate::random_network(cfg.layer_sizes, 72.0, 1);
  for (auto _ : state) {
    auto g = surrogate::grad(net, *loss);
    benchmark::DoNotOptimize(g.layers.back().b[0]);
  }
}
BENCHMARK(BM_LossAndGradient)->Arg(64)->Arg(256);

static dss::MdpSpec bench_spec() {
  dss::MdpSpec s;
  s.tumor_bins = dss::uniform_edges(200.0, 5);
  s.kidney_bins = dss::uniform_edges(40.0, 4);
  s.liver_bins = dss::uniform_edges(60.0, 3);
  s.max_cycles = 3;
  s.rollouts_per_sa = 4;
  return s;
}

static void BM_BuildMdp(benchmark::State& state) {
  const auto spec = bench_spec();
  const dss::MechanisticCycleModel model(spec);
  for (auto _ : state) {
    auto m = dss::build_mdp(pbpk::reference_patient(), spec, model, 1);
    benchmark::DoNotOptimize(m.n_states());
  }
}
BENCHMARK(BM_BuildMdp)->Unit(benchmark::kMillisecond);

static void BM_PolicyIteration(benchmark::State& state) {
  const auto spec = bench_spec();
  const auto m = dss::build_mdp(pbpk::reference_patient(), spec);
  for (auto _ : state) {
    auto pol = dss::policy_iteration(m, spec);
    benchmark::DoNotOptimize(pol.value[0]);
  }
}
BENCHMARK(BM_PolicyIteration)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
