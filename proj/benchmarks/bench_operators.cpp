#include <benchmark/benchmark.h>

#include <random>

#include "vpblab/collision.hpp"
#include "vpblab/mode_dynamics.hpp"

using namespace vpblab;

namespace {

RealVec random_slice(const VelocityGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  RealVec u(g.size());
  for (int i = 0; i < g.size(); ++i) u[i] = nd(rng) * g.sqrt_maxwellian()[i];
  return u;
}

void BM_SurrogateApplyL(benchmark::State& state) {
  auto grid = VelocityGrid::build(3, static_cast<int>(state.range(0)),
                                  GridStrategy::GaussHermiteTensor);
  auto backend = CollisionBackend::bgk(grid);
  std::mt19937_64 rng(1);
  RealVec u = random_slice(grid, rng);
  for (auto _ : state) benchmark::DoNotOptimize(backend.apply_L(u));
  state.SetItemsProcessed(state.iterations() * grid.size());
}
BENCHMARK(BM_SurrogateApplyL)->Arg(6)->Arg(8)->Arg(12);

void BM_HardSphereAssembly(benchmark::State& state) {
  auto grid = VelocityGrid::build(3, static_cast<int>(state.range(0)),
                                  GridStrategy::GaussHermiteTensor);
  for (auto _ : state) {
    HardSphereOptions opts;
    opts.spectral_degree = 5;
    benchmark::DoNotOptimize(CollisionBackend::hard_sphere(grid, opts));
  }
}
BENCHMARK(BM_HardSphereAssembly)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_HardSphereApplyL(benchmark::State& state) {
  auto grid = VelocityGrid::build(3, 6, GridStrategy::GaussHermiteTensor);
  auto backend = CollisionBackend::hard_sphere(grid);
  std::mt19937_64 rng(1);
  RealVec u = random_slice(grid, rng);
  for (auto _ : state) benchmark::DoNotOptimize(backend.apply_L(u));
}
BENCHMARK(BM_HardSphereApplyL);

void BM_ModeStep(benchmark::State& state) {
  auto grid = VelocityGrid::build(3, static_cast<int>(state.range(0)),
                                  GridStrategy::GaussHermiteTensor);
  auto backend = CollisionBackend::bgk(grid);
  RealVec k = RealVec::Zero(3);
  k[0] = 1.0;
  ModeOperator op(k, backend);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  ComplexVec u(grid.size());
  for (int i = 0; i < grid.size(); ++i)
    u[i] = Complex(nd(rng), nd(rng)) * grid.sqrt_maxwellian()[i];
  ModeState s{u, 0.0, k};
  const double dt = op.stability_dt();
  for (auto _ : state) {
    s = step(op, s, dt);
    benchmark::DoNotOptimize(s.u);
  }
  state.SetItemsProcessed(state.iterations() * grid.size());
}
BENCHMARK(BM_ModeStep)->Arg(6)->Arg(8)->Arg(12);

void BM_Projection(benchmark::State& state) {
  auto grid = VelocityGrid::build(3, 12, GridStrategy::GaussHermiteTensor);
  std::mt19937_64 rng(1);
  RealVec u = random_slice(grid, rng);
  for (auto _ : state) benchmark::DoNotOptimize(project(grid, u, Projector::P));
}
BENCHMARK(BM_Projection);

}  // namespace

BENCHMARK_MAIN();
