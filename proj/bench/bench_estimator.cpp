#include <benchmark/benchmark.h>

#include "wdl/estimator.hpp"
#include "wdl/oracle.hpp"
#include "wdl/sampler.hpp"
#include "wdl/weightings.hpp"

namespace {

wdl::LossProblem problem(const wdl::MixtureOracle& o) {
  wdl::LossProblem p;
  p.model = &o;
  p.data = &o;
  p.schedule = wdl::truncate(wdl::make_schedule("cosine"), 12.0, -12.0).schedule();
  p.weighting = wdl::make_weighting("sigmoid-2");
  return p;
}

void BM_LossParallel(benchmark::State& st) {
  const auto o = wdl::MixtureOracle::two_component();
  const auto p = problem(o);
  for (auto _ : st) benchmark::DoNotOptimize(wdl::weighted_loss_mc(p, st.range(0), 1).mean);
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_LossSerial(benchmark::State& st) {
  const auto o = wdl::MixtureOracle::two_component();
  const auto p = problem(o);
  for (auto _ : st) benchmark::DoNotOptimize(wdl::weighted_loss_mc_serial(p, st.range(0), 1).mean);
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_SampleHeun(benchmark::State& st) {
  const auto o = wdl::MixtureOracle::two_component();
  wdl::SamplerConfig c;
  c.steps = 32;
  c.schedule = wdl::truncate(wdl::make_schedule("cosine"), 12.0, -12.0).schedule();
  for (auto _ : st) benchmark::DoNotOptimize(wdl::sample(o, c, st.range(0), 1).samples.data());
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(BM_LossParallel)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_LossSerial)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_SampleHeun)->Arg(1 << 12);

BENCHMARK_MAIN();
