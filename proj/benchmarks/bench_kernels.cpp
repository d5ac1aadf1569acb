#include <benchmark/benchmark.h>

#include "ctxprobe/rng.hpp"
#include "ctxprobe/tensor.hpp"

using namespace ctxprobe;

namespace {

Matrix random(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (auto& v : m.data()) v = static_cast<float>(rng.normal());
  return m;
}

// Sequence length x hidden times hidden x hidden, the shape of a projection.
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const Matrix a = random(n, d, 1), b = random(d, d, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * d * d));
}
BENCHMARK(BM_Matmul)->Args({32, 64})->Args({32, 768})->Args({128, 768});

void BM_MatmulTransposed(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix q = random(n, 64, 3), k = random(n, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_transposed(q, k));
}
BENCHMARK(BM_MatmulTransposed)->Arg(32)->Arg(128);

void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix scores = random(n, n, 5);
  for (auto _ : state) {
    Matrix m = scores;
    softmax_rows_inplace(m);
    benchmark::DoNotOptimize(m.data().data());
  }
}
BENCHMARK(BM_Softmax)->Arg(32)->Arg(128);

void BM_LayerNorm(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Matrix x = random(128, d, 6);
  const std::vector<float> gamma(d, 1.0f), beta(d, 0.0f);
  for (auto _ : state) {
    Matrix m = x;
    layer_norm_rows_inplace(m, gamma, beta, 1e-12f);
    benchmark::DoNotOptimize(m.data().data());
  }
}
BENCHMARK(BM_LayerNorm)->Arg(64)->Arg(768);

void BM_Gelu(benchmark::State& state) {
  const Matrix x = random(128, 3072, 7);
  for (auto _ : state) {
    Matrix m = x;
    apply_activation_inplace(m, Activation::kGelu);
    benchmark::DoNotOptimize(m.data().data());
  }
}
BENCHMARK(BM_Gelu);

}  // namespace

BENCHMARK_MAIN();
