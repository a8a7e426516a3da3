#include <random>

#include <benchmark/benchmark.h>

#include "wrnlab/attacks.hpp"
#include "wrnlab/bounds.hpp"
#include "wrnlab/ops.hpp"
#include "wrnlab/wrn.hpp"

using namespace wrnlab;

namespace {

TensorF uniform(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  TensorF t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

// args: batch, channels, spatial
void BM_ConvForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1)),
             m = static_cast<std::size_t>(state.range(2));
  const TensorF x = uniform({n, c, m, m}, 1), w = uniform({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d_forward(x, w, 1, 1));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * c * c * m * m * 9));
}
BENCHMARK(BM_ConvForward)->Args({8, 16, 32})->Args({8, 64, 16})->Args({32, 32, 16})->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1)),
             m = static_cast<std::size_t>(state.range(2));
  const TensorF x = uniform({n, c, m, m}, 1), w = uniform({c, c, 3, 3}, 2), dy = uniform({n, c, m, m}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::conv2d_backward_input(dy, w, x.shape(), 1, 1));
    benchmark::DoNotOptimize(ops::conv2d_backward_weight(dy, x, w.shape(), 1, 1));
  }
}
BENCHMARK(BM_ConvBackward)->Args({8, 16, 32})->Args({8, 64, 16})->Unit(benchmark::kMillisecond);

// One PGD step (forward + input gradient) on a toy WRN; arg: batch
void BM_PgdStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Network<float> net = build_network<float>(parse_notation("d1-1-1_w2-2-2_g0.25", 10, {3, 16, 16}), 1);
  const TensorF x = uniform({n, 3, 16, 16}, 4, 0.0f, 1.0f);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 10);
  AttackConfig cfg = AttackConfig::evaluation();
  cfg.steps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(pgd<float>(net, x, y, cfg));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_PgdStep)->Arg(1)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

// args: channels, spatial, method (0 power, 1 circulant, 2 dense)
void BM_SpectralNorm(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), m = static_cast<int>(state.range(1));
  const auto uc = static_cast<std::size_t>(c);
  const Tensor w = uniform({uc, uc, 3, 3}, 5).cast<double>();
  LayerShape shape;
  shape.kind = LayerKind::Conv;
  shape.in_channels = c;
  shape.out_channels = c;
  shape.kernel = 3;
  shape.spatial = m;
  SpectralOptions o;
  o.method = state.range(2) == 0 ? SpectralMethod::PowerIteration
             : state.range(2) == 1 ? SpectralMethod::CirculantExact
                                   : SpectralMethod::DenseExact;
  for (auto _ : state) benchmark::DoNotOptimize(spectral_norm(w, shape, o));
}
BENCHMARK(BM_SpectralNorm)
    ->Args({8, 8, 0})->Args({8, 8, 1})->Args({8, 8, 2})
    ->Args({16, 8, 0})->Args({16, 8, 1})
    ->Args({64, 16, 0})
    ->Unit(benchmark::kMillisecond);

void BM_MonteCarlo(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(mc_singular_values(400, 100, 10, 1));
}
BENCHMARK(BM_MonteCarlo)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
