#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sigvol/feature_cache.hpp"
#include "sigvol/process_sim.hpp"
#include "sigvol/sig_calibration.hpp"
#include "sigvol/sig_model.hpp"
#include "sigvol/signature.hpp"

using namespace sigvol;

namespace {

SampledPath primary_path(int n_steps) {
  const auto b = simulate_brownian(1, n_steps, 1.6, 7);
  const HestonParams p{0.1, 2.0, 0.15, 0.2, 0.0};
  std::vector<double> x(n_steps + 1), t(n_steps + 1);
  euler_cir_path(p, b.dW_path(0), b.dt(), x);
  for (int k = 0; k <= n_steps; ++k) t[k] = k * b.dt();
  return time_augment(SampledPath(t, x, 1));
}

}  // namespace

static void BM_Signature(benchmark::State& state) {
  const auto path = primary_path(480);
  const int cap = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(signature(path, cap));
  state.SetItemsProcessed(state.iterations() * 480);
}
BENCHMARK(BM_Signature)->Arg(3)->Arg(5)->Arg(7);

static void BM_ExtendBySegment(benchmark::State& state) {
  TruncatedTensor s = TruncatedTensor::unit(2, 7);
  const std::vector<double> inc{1.0 / 300, 0.01};
  for (auto _ : state) {
    extend_by_segment(s, inc);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_ExtendBySegment);

static void BM_QMatrix(benchmark::State& state) {
  const auto sig = signature(primary_path(480), 7);
  for (auto _ : state) benchmark::DoNotOptimize(q_matrix(sig, 3));
}
BENCHMARK(BM_QMatrix);

static void BM_FactorNegQ(benchmark::State& state) {
  const auto q = q_matrix(signature(primary_path(480), 7), 3);
  for (auto _ : state) benchmark::DoNotOptimize(factor_neg_q(q));
}
BENCHMARK(BM_FactorNegQ);

static void BM_LossAndGradient(benchmark::State& state) {
  FeatureSpec spec;
  spec.n_paths = static_cast<std::size_t>(state.range(0));
  static const FeatureCache cache = build_features(spec);
  std::vector<OptionQuote> quotes;
  for (double t : spec.maturities) {
    for (double k : {90.0, 95.0, 100.0, 105.0, 110.0}) quotes.push_back({k, t, bs_price(100, k, t, 0, 0.2), 0.0, 1.0});
  }
  const SigPricer pricer(cache, quotes, 100.0);
  std::vector<double> ell(15, 0.0), steps(15, 1e-6), grad(15);
  ell[0] = 0.2;
  for (auto _ : state) benchmark::DoNotOptimize(pricer.loss_and_gradient(ell, steps, grad));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(spec.n_paths));
}
BENCHMARK(BM_LossAndGradient)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
