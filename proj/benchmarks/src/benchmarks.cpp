#include <benchmark/benchmark.h>

#include "netme/sim.hpp"

using namespace netme;

namespace {

IcarStructure grid_icar(int side) { return icar_structure(make_grid_lattice(side, side)); }

void BM_QuadForm(benchmark::State& state) {
  const IcarStructure icar = grid_icar(static_cast<int>(state.range(0)));
  const Eigen::VectorXd v = Eigen::VectorXd::Random(static_cast<Eigen::Index>(icar.dimension()));
  for (auto _ : state) benchmark::DoNotOptimize(icar.quad_form(v));
  state.SetComplexityN(static_cast<int64_t>(icar.dimension()));
}
BENCHMARK(BM_QuadForm)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_SolveSpd(benchmark::State& state) {
  const IcarStructure icar = grid_icar(static_cast<int>(state.range(0)));
  const auto n = static_cast<Eigen::Index>(icar.dimension());
  const SparseSymmetricMatrix q = icar.k().scaled(2.0).plus_diagonal(Eigen::VectorXd::Ones(n));
  const Eigen::VectorXd b = Eigen::VectorXd::Random(n);
  for (auto _ : state) benchmark::DoNotOptimize(solve_spd(q, b));
  state.SetComplexityN(n);
}
BENCHMARK(BM_SolveSpd)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_SampleConstrained(benchmark::State& state) {
  const IcarStructure icar = grid_icar(static_cast<int>(state.range(0)));
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(sample_constrained(icar, 2.0, rng));
  state.SetComplexityN(static_cast<int64_t>(icar.dimension()));
}
BENCHMARK(BM_SampleConstrained)->RangeMultiplier(2)->Range(16, 128)->Complexity();

// One chain of 50 sweeps per iteration, after the MAP start.
void BM_McmcSweeps(benchmark::State& state) {
  SimScenario sc;
  sc.rows = sc.cols = static_cast<int>(state.range(0));
  sc.variant = Variant::spatial_me;
  const SimulatedData sim = simulate_dataset(sc);
  const IcarStructure icar = icar_structure(sim.network);
  ModelSpec spec;
  spec.variant = Variant::spatial_me;
  SamplerConfig c;
  c.n_iterations = 50;
  c.n_burnin = 0;
  c.thinning = 1;
  c.n_chains = 1;
  c.n_threads = 1;
  c.store_fields = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_mcmc(sim.data, spec, icar, c));
  state.SetItemsProcessed(state.iterations() * c.n_iterations);
}
BENCHMARK(BM_McmcSweeps)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_SnapEvents(benchmark::State& state) {
  const auto side = static_cast<int>(state.range(0));
  const SegmentNetwork net = build_adjacency(make_street_grid_segments(side, side, 100.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 100.0 * side);
  std::vector<EventPoint> events;
  for (int i = 0; i < 5000; ++i) events.push_back({std::to_string(i), {u(rng), u(rng)}});
  for (auto _ : state) benchmark::DoNotOptimize(snap_events(events, net, 10.0));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(events.size()));
}
BENCHMARK(BM_SnapEvents)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
