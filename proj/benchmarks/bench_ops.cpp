#include <benchmark/benchmark.h>

#include <random>

#include "dgrlab/layers.hpp"
#include "dgrlab/ops.hpp"
#include "dgrlab/parallel.hpp"

namespace {

using namespace dgrlab;
using ad::Tensor;

Tensor random_tensor(ad::Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_tensor({n, n}, 1, true), b = random_tensor({n, n}, 2, true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    ad::backprop(ad::sum(ad::matmul(a, b)));
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64);

// Batch of 32 patches through one 3x3 convolution, as in the first backbone stage.
void BM_Conv2d(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  const auto x = random_tensor({32, 3, size, size}, 3);
  const auto w = random_tensor({channels, 3, 3, 3}, 4), b = random_tensor({channels}, 5);
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ad::conv2d(x, w, b));
}
BENCHMARK(BM_Conv2d)->Args({16, 32})->Args({16, 48});

void BM_Conv2dThreads(benchmark::State& state) {
  const auto previous = thread_budget();
  set_thread_budget(static_cast<std::size_t>(state.range(0)));
  const auto x = random_tensor({32, 16, 16, 16}, 3);
  const auto w = random_tensor({32, 16, 3, 3}, 4), b = random_tensor({32}, 5);
  ad::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ad::conv2d(x, w, b));
  set_thread_budget(previous);
}
BENCHMARK(BM_Conv2dThreads)->Arg(1)->Arg(2)->Arg(4)->UseRealTime();

}  // namespace
