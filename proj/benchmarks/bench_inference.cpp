#include <benchmark/benchmark.h>

#include "hsseg/duration_viterbi.hpp"
#include "hsseg/slds.hpp"
#include "hsseg/synth.hpp"

namespace {

using namespace hsseg;

SynthOutput demo_signal(std::size_t n) {
  SynthSpec spec;
  spec.params = demo_msar_params();
  spec.seed = 17;
  spec.length = n;
  std::vector<double> mean, sd;
  for (double m : demo_duration_means()) mean.push_back(m * 1000.0);
  for (double s : demo_duration_sds()) sd.push_back(s * 1000.0);
  spec.plan = cyclic_duration_plan(mean, sd, n, 1, 3);
  return generate_msar(spec);
}

void BM_Skf(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto sig = demo_signal(n);
  const MsarParams p = demo_msar_params();
  const auto ssv = to_state_space(p);
  for (auto _ : state) benchmark::DoNotOptimize(skf(sig.signal, ssv, p.Z));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Skf)->Arg(1000)->Arg(8000)->Unit(benchmark::kMillisecond);

void BM_Sks(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto sig = demo_signal(n);
  const MsarParams p = demo_msar_params();
  const auto ssv = to_state_space(p);
  const auto fwd = skf(sig.signal, ssv, p.Z);
  for (auto _ : state) benchmark::DoNotOptimize(sks(fwd, ssv, p.Z));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Sks)->Arg(8000)->Unit(benchmark::kMillisecond);

void BM_SkfViterbi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto sig = demo_signal(n);
  const MsarParams p = demo_msar_params();
  const auto fwd = skf(sig.signal, to_state_space(p), p.Z);
  DurationStats stats;
  for (int j = 0; j < kNumRegimes; ++j) {
    stats.mean_s[static_cast<std::size_t>(j)] = demo_duration_means()[static_cast<std::size_t>(j)];
    stats.sd_s[static_cast<std::size_t>(j)] = demo_duration_sds()[static_cast<std::size_t>(j)];
  }
  HeartRateEstimate hr;
  hr.hr = 60.0 / 0.82;
  hr.t_sys = 0.32;
  const auto dm = build_duration_model(hr, stats, 1000.0);
  const auto a = cyclic_successor_matrix(kNumRegimes);
  const Eigen::VectorXd pi0 = Eigen::VectorXd::Constant(kNumRegimes, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(skf_viterbi(fwd.M, dm, a, pi0));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_SkfViterbi)->Arg(8000)->Unit(benchmark::kMillisecond);

}  // namespace
