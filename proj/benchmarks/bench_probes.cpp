#include <benchmark/benchmark.h>

#include <cmath>

#include "ctxprobe/metrics.hpp"
#include "ctxprobe/pca.hpp"
#include "ctxprobe/probes.hpp"
#include "ctxprobe/rng.hpp"

using namespace ctxprobe;

namespace {

ProbeDataset blobs(int k, std::size_t d, int per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<float>> centers(static_cast<std::size_t>(k), std::vector<float>(d));
  for (auto& c : centers)
    for (auto& x : c) x = static_cast<float>(rng.normal() * 4.0 / std::sqrt(static_cast<double>(d)));
  ProbeDataset ds;
  ds.features = Matrix(static_cast<std::size_t>(k * per_class), d);
  for (int c = 0; c < k; ++c) ds.label_names.push_back("c" + std::to_string(c));
  for (int i = 0; i < k * per_class; ++i) {
    ds.labels.push_back(i % k);
    auto row = ds.features.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < d; ++j)
      row[j] = static_cast<float>(rng.normal()) + centers[static_cast<std::size_t>(i % k)][j];
  }
  return ds;
}

// 58 samples in BERT-base shapes, the size of the CPWS dataset.
std::vector<TraceSet> traces(std::size_t n, int layers, std::size_t hidden, std::size_t inter) {
  Rng rng(9);
  auto vec = [&](std::size_t d) {
    std::vector<float> v(d);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
  };
  std::vector<TraceSet> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].sentence_id = "t" + std::to_string(i);
    out[i].span = {1, 2};
    out[i].static_emb = vec(hidden);
    for (int l = 0; l < layers; ++l) out[i].layers.push_back({vec(hidden), vec(inter), vec(hidden)});
  }
  return out;
}

void BM_TrainLr(benchmark::State& state) {
  const auto ds = blobs(static_cast<int>(state.range(0)), static_cast<std::size_t>(state.range(1)), 40, 1);
  for (auto _ : state) benchmark::DoNotOptimize(train_lr(ds));
}
BENCHMARK(BM_TrainLr)->Args({2, 768})->Args({5, 3072})->Unit(benchmark::kMillisecond);

void BM_TrainSvm(benchmark::State& state) {
  const auto ds = blobs(static_cast<int>(state.range(0)), static_cast<std::size_t>(state.range(1)), 40, 2);
  for (auto _ : state) benchmark::DoNotOptimize(train_svm(ds));
}
BENCHMARK(BM_TrainSvm)->Args({2, 768})->Args({5, 3072})->Unit(benchmark::kMillisecond);

void BM_PcaFit(benchmark::State& state) {
  const auto t = traces(58, 1, 768, static_cast<std::size_t>(state.range(0)));
  const Matrix x = stack_cell(t, 1, Sublayer::kActs);
  for (auto _ : state) benchmark::DoNotOptimize(pca_fit(x, 2));
}
BENCHMARK(BM_PcaFit)->Arg(768)->Arg(3072)->Unit(benchmark::kMillisecond);

void BM_SummarizeCpwsShape(benchmark::State& state) {
  const auto t = traces(58, 12, 768, 3072);
  std::vector<SentencePair> pairs;
  for (std::size_t i = 0; i + 1 < t.size(); i += 2) pairs.push_back({"kw" + std::to_string(i), i, i + 1});
  for (auto _ : state) benchmark::DoNotOptimize(summarize(t, pairs));
}
BENCHMARK(BM_SummarizeCpwsShape)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
