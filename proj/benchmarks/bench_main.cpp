#include <benchmark/benchmark.h>

#include "gfrag/eigen.hpp"
#include "gfrag/semigroup.hpp"

using namespace gfrag;

namespace {

CoefficientSet mitosis() {
  return {GrowthRate::constant(1.0), FragmentationRate::constant(1.0),
          FragmentationKernel::mitosis()};
}

CoefficientSet uniform() {
  return {GrowthRate::constant(1.0), FragmentationRate::constant(1.0),
          FragmentationKernel::uniform()};
}

void BM_GainAssembly(benchmark::State& state) {
  const GridPtr g = uniform_grid(30.0, state.range(0));
  const CoefficientSet c = uniform();
  for (auto _ : state) benchmark::DoNotOptimize(assemble_frag_gain(*g, c));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GainAssembly)->RangeMultiplier(2)->Range(128, 1024)->Complexity();

void BM_ResolventApply(benchmark::State& state) {
  const GridPtr g = uniform_grid(30.0, state.range(0));
  const Resolvent r(*g, make_flow(mitosis()), 2.0);
  const Vec h = Vec::Ones(g->size());
  for (auto _ : state) benchmark::DoNotOptimize(r.apply(h));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ResolventApply)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

void BM_Perron(benchmark::State& state) {
  const GridPtr g = uniform_grid(30.0, state.range(0));
  const CoefficientSet c = mitosis();
  for (auto _ : state) benchmark::DoNotOptimize(solve_perron(g, c).lambda);
}
BENCHMARK(BM_Perron)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_EvolveStep(benchmark::State& state) {
  const GridPtr g = uniform_grid(30.0, state.range(0));
  const CoefficientSet c = mitosis();
  const PerronTriple t = solve_perron(g, c);
  const Evolver ev(g, c, t, g->width(0));
  Vec v = t.G.values;
  for (auto _ : state) {
    v = ev.step(v, ev.dt());
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_EvolveStep)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
