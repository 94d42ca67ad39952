#include <benchmark/benchmark.h>

#include "tcm/metrics.hpp"
#include "tcm/net.hpp"
#include "tcm/oracle.hpp"
#include "tcm/rng.hpp"

namespace {

tcm::Dataset bench_data() { return tcm::make_dataset("ring8", 1024, 2, 7); }

void BM_ExactScore(benchmark::State& state) {
  const tcm::Dataset data = bench_data();
  std::vector<double> x = {0.3, -0.8};
  for (auto _ : state) {
    auto s = tcm::exact_score(x, 1.0, data);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_ExactScore);

void BM_CmForward(benchmark::State& state) {
  tcm::MlpArch arch;
  arch.hidden = static_cast<std::size_t>(state.range(0));
  tcm::CmParams p = tcm::init_params(/*seed=*/1, arch, 0.5);
  const std::size_t batch = 256;
  tcm::Rng rng(3, "bench-x");
  std::vector<double> x(batch * arch.in_dim);
  for (double& v : x) v = rng.normal();
  std::vector<double> t(batch, 2.0);
  for (auto _ : state) {
    auto y = tcm::cm_eval(p, x, t);
    benchmark::DoNotOptimize(y);
  }
}
BENCHMARK(BM_CmForward)->Arg(128)->Arg(256);

void BM_W2Exact(benchmark::State& state) {
  const tcm::Dataset data = bench_data();
  tcm::Rng ra(1, "bench-a"), rb(2, "bench-b");
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  auto a = tcm::draw_batch(data, n, ra);
  auto b = tcm::draw_batch(data, n, rb);
  for (auto _ : state) {
    double v = tcm::w2_exact(a, b, data.d);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_W2Exact)->Arg(128)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
