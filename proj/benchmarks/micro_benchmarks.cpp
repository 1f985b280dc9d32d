#include <benchmark/benchmark.h>

#include "unnas/analysis/stats.hpp"
#include "unnas/autograd/ops.hpp"
#include "unnas/nn/network.hpp"
#include "unnas/pretext/pretext.hpp"
#include "unnas/search_space/sampling.hpp"

namespace unnas {
namespace {

Tensor<float> random_tensor(Shape s, Rng& rng) {
  Tensor<float> t(std::move(s));
  for (auto& v : t.data) v = static_cast<float>(standard_normal(rng));
  return t;
}

// args: channels, spatial extent
void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  Rng rng(1);
  const auto x = random_tensor({32, c, hw, hw}, rng);
  Parameter<float> w{"w", random_tensor({c, c, 3, 3}, rng)};
  for (auto _ : state) {
    Tape<float> tape;
    auto y = ops::conv2d(tape.input(x, false), tape.param(w), std::optional<Var<float>>{}, ops::ConvSpec{1, 1, 1, 1});
    tape.backward(ops::sum(y));
    benchmark::DoNotOptimize(w.grad.data());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({16, 16})->Args({16, 32})->Args({32, 16})->Unit(benchmark::kMillisecond);

void BM_GenotypeNetworkForward(benchmark::State& state) {
  Rng rng(2);
  const Architecture arch = sample_genotype(rng, 4);
  nn::NetworkConfig cfg;
  cfg.width = 16;
  cfg.depth = static_cast<int>(state.range(0));
  auto model = nn::make_model<float>(arch, cfg, rng);
  const auto x = random_tensor({16, 3, 32, 32}, rng);
  for (auto _ : state) {
    Tape<float> tape(false);
    benchmark::DoNotOptimize(model->forward(tape.input(x, false), false).logits.value().data.data());
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_GenotypeNetworkForward)->Arg(5)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ArchitectureCost(benchmark::State& state) {
  Rng rng(3);
  nn::NetworkConfig cfg;
  cfg.width = 16;
  cfg.depth = 20;
  for (auto _ : state) {
    const Architecture a = sample_genotype(rng, 4);
    benchmark::DoNotOptimize(nn::architecture_cost(a, cfg, {3, 32, 32}));
  }
}
BENCHMARK(BM_ArchitectureCost);

void BM_SpearmanRho(benchmark::State& state) {
  Rng rng(4);
  std::vector<double> xs(static_cast<std::size_t>(state.range(0))), ys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = uniform01(rng);
    ys[i] = xs[i] + 0.1 * standard_normal(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(analysis::spearman_rho(xs, ys).rho);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SpearmanRho)->RangeMultiplier(10)->Range(100, 100000)->Complexity(benchmark::oNLogN);

void BM_EfficiencyCurve(benchmark::State& state) {
  Rng rng(5);
  std::vector<ArchRecord> records(500);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].arch_id = "a" + std::to_string(i);
    records[i].accuracies = {{"rot", uniform01(rng)}, {"supv_cls", uniform01(rng)}};
  }
  const std::vector<int> sizes{1, 2, 5, 10, 20, 50, 100, 200, 500};
  for (auto _ : state) {
    benchmark::DoNotOptimize(analysis::efficiency_curve(records, "rot", "supv_cls", sizes, rng).points.size());
  }
}
BENCHMARK(BM_EfficiencyCurve)->Unit(benchmark::kMicrosecond);

void BM_HuberFit(benchmark::State& state) {
  Rng rng(6);
  std::vector<double> xs(1000), ys(1000);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = uniform01(rng);
    ys[i] = 2 * xs[i] + 0.1 * standard_normal(rng) + (i % 20 == 0 ? 5.0 : 0.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(analysis::huber_fit(xs, ys).slope);
}
BENCHMARK(BM_HuberFit)->Unit(benchmark::kMicrosecond);

void BM_PretextTransforms(benchmark::State& state) {
  Rng rng(7);
  const auto image = random_tensor({3, 32, 32}, rng);
  const auto jig = jigsaw_permutation_set(2, 24, rng);
  int k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(rotate_label(image, k % 4).input.data.data());
    benchmark::DoNotOptimize(jigsaw_example(image, jig, k % 24).input.data.data());
    benchmark::DoNotOptimize(color_example(image, 8, 4).input.data.data());
    ++k;
  }
}
BENCHMARK(BM_PretextTransforms)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace unnas

BENCHMARK_MAIN();
