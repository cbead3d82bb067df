#include <benchmark/benchmark.h>

#include "lfsr/baselines.hpp"
#include "lfsr/degradation.hpp"
#include "lfsr/metrics.hpp"
#include "lfsr/models.hpp"
#include "lfsr/ops.hpp"
#include "lfsr/phantom.hpp"

using namespace lfsr;

namespace {

Tensor noise(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  const Tensor x = noise({1, c, n, n}, 1), w = noise({c, c, 3, 3}, 2), b = noise({c}, 3);
  for (auto _ : state) {
    Tape tape = Tape::no_grad();
    benchmark::DoNotOptimize(ops::conv2d(tape, x, w, b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(9 * c * c * n * n));
}
BENCHMARK(BM_Conv2dForward)->Args({16, 32})->Args({16, 64})->Args({64, 32});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  Tensor x = noise({1, c, n, n}, 1), w = noise({c, c, 3, 3}, 2), b = noise({c}, 3);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    tape.backward(ops::sum(tape, ops::conv2d(tape, x, w, b)));
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 32})->Args({16, 64});

void BM_Fft2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({n, n}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(fft2(x));
}
BENCHMARK(BM_Fft2)->Arg(64)->Arg(128)->Arg(1024);

void BM_Degrade(benchmark::State& state) {
  const Tensor x = noise({128, 128}, 5);
  DegradeConfig cfg;
  cfg.sigma = 20.0;
  for (auto _ : state) benchmark::DoNotOptimize(degrade(x, cfg, 1));
}
BENCHMARK(BM_Degrade);

void BM_NlmDenoise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({n, n}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(nlm_denoise(x, 0.1));
}
BENCHMARK(BM_NlmDenoise)->Arg(32)->Arg(64);

void BM_Ssim(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = noise({n, n}, 7), b = noise({n, n}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(128);

void BM_SrresnetInfer(benchmark::State& state) {
  NetworkSpec g = build_srresnet(4, 2, 16, 1);
  const Tensor lr = noise({32, 32}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(super_resolve(g, lr));
}
BENCHMARK(BM_SrresnetInfer);

void BM_GenPhantom(benchmark::State& state) {
  PhantomConfig cfg;
  std::uint64_t id = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gen_phantom(cfg, id++));
}
BENCHMARK(BM_GenPhantom);

}  // namespace

BENCHMARK_MAIN();
