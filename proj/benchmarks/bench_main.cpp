#include <benchmark/benchmark.h>

#include "qelab/anisotropic.hpp"
#include "qelab/operators.hpp"
#include "qelab/spectral.hpp"

using namespace qelab;

namespace {

void BM_AdjacencyEigensolve(benchmark::State& state) {
  RegularGraph g = random_regular(int(state.range(0)), 3, 1);
  for (auto _ : state) {
    EigenSystem eig = adjacency_eigensystem(g);
    benchmark::DoNotOptimize(eig.lambdas.sum());
  }
}
BENCHMARK(BM_AdjacencyEigensolve)->Arg(200)->Arg(800);

void BM_PathEnumeration(benchmark::State& state) {
  RegularGraph g = random_regular(100, 3, 1);
  BondTable bonds = make_bond_table(g);
  const int k = int(state.range(0));
  for (auto _ : state) {
    PathIndex idx(bonds, k);
    long acc = 0;
    for (long id = 0; id < idx.size(); ++id) acc += idx.end(id);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_PathEnumeration)->Arg(3)->Arg(5);

void BM_FoldShell2(benchmark::State& state) {
  RegularGraph g = random_regular(int(state.range(0)), 3, 1);
  BondTable bonds = make_bond_table(g);
  PathSpace space(g, bonds);
  PathKernel K = random_kernel(space.index(2), 7);
  for (auto _ : state) {
    auto F = fold_to_graph(space, K);
    benchmark::DoNotOptimize(F(0, 0));
  }
}
BENCHMARK(BM_FoldShell2)->Arg(100)->Arg(400);

void BM_GreenHomotopy(benchmark::State& state) {
  TransitionWeights p{{0.5, 0.3, 0.2}};
  for (auto _ : state) {
    GreenState st = solve_green(p, cplx(0.2, 0.05));
    benchmark::DoNotOptimize(st.w);
  }
}
BENCHMARK(BM_GreenHomotopy);

void BM_GreenOnAxis(benchmark::State& state) {
  TransitionWeights p{{0.5, 0.3, 0.2}};
  for (auto _ : state) {
    GreenState st = solve_green_on_axis(p, 0.1);
    benchmark::DoNotOptimize(st.w);
  }
}
BENCHMARK(BM_GreenOnAxis);

}  // namespace

BENCHMARK_MAIN();
