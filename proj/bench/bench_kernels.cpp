// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include "foml/kernels.hpp"
#include "foml/rng.hpp"

namespace {

foml::Tensor random_tensor(foml::Shape shape, std::uint64_t seed) {
  foml::Tensor t(std::move(shape));
  foml::Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(foml::kernels::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_MatmulReference(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(foml::kernels::reference::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({16, c, 8, 8}, 3), w = random_tensor({c, c, 3, 3}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(foml::kernels::conv2d(x, w));
}

void BM_Conv2dReference(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({16, c, 8, 8}, 3), w = random_tensor({c, c, 3, 3}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(foml::kernels::reference::conv2d(x, w));
}

void BM_Conv2dWeightGrad(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({16, c, 8, 8}, 3), gy = random_tensor({16, c, 8, 8}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(foml::kernels::conv2d_weight_grad(x, gy, 3));
}

void BM_Conv2dWeightGradReference(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({16, c, 8, 8}, 3), gy = random_tensor({16, c, 8, 8}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(foml::kernels::reference::conv2d_weight_grad(x, gy, 3));
}

}  // namespace

BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_MatmulReference)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32);
BENCHMARK(BM_Conv2dReference)->Arg(8)->Arg(32);
BENCHMARK(BM_Conv2dWeightGrad)->Arg(8)->Arg(32);
BENCHMARK(BM_Conv2dWeightGradReference)->Arg(8)->Arg(32);

BENCHMARK_MAIN();
