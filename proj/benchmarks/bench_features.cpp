#include <benchmark/benchmark.h>

#include <random>

#include "hsseg/hmm.hpp"
#include "hsseg/mfcc.hpp"
#include "hsseg/preprocess.hpp"

namespace {

using namespace hsseg;

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

void BM_Preprocess(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 1);
  PreprocessConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(preprocess_signal(x, 2000.0, cfg));
}
BENCHMARK(BM_Preprocess)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_Mfcc(benchmark::State& state) {
  const auto x = noise(static_cast<std::size_t>(state.range(0)), 2);
  MfccConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(extract_mfcc(x, cfg));
}
BENCHMARK(BM_Mfcc)->Arg(1000)->Arg(8000);

// Beat-like sequences: four blocks with distinct means per block.
std::vector<FeatureSequence> beats(int count, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<FeatureSequence> out;
  for (int i = 0; i < count; ++i) {
    FeatureSequence f;
    f.frames.resize(40, 12);
    for (int t = 0; t < 40; ++t)
      for (int d = 0; d < 12; ++d) f.frames(t, d) = 3.0 * (t / 10) + g(rng);
    out.push_back(std::move(f));
  }
  return out;
}

void BM_BaumWelch(benchmark::State& state) {
  const auto data = beats(static_cast<int>(state.range(0)), 3);
  HmmOptions opts;
  opts.max_iter = 5;
  opts.tol = 0.0;
  const HmmParams init = segmental_kmeans_init(data, opts);
  for (auto _ : state) benchmark::DoNotOptimize(baum_welch_train(init, data, opts));
}
BENCHMARK(BM_BaumWelch)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ViterbiScore(benchmark::State& state) {
  const auto data = beats(50, 4);
  HmmOptions opts;
  const HmmParams model = segmental_kmeans_init(data, opts);
  for (auto _ : state) benchmark::DoNotOptimize(viterbi_loglik(model, data.front()));
}
BENCHMARK(BM_ViterbiScore);

}  // namespace
