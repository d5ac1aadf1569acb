#include <benchmark/benchmark.h>

#include <numeric>

#include "ctxprobe/encoder.hpp"
#include "ctxprobe/model.hpp"

using namespace ctxprobe;

namespace {

// BERT-base shapes with a small vocabulary: the embedding table size does not
// affect forward cost.
const Encoder& base_encoder() {
  static const Encoder e = [] {
    ModelConfig c = ModelConfig::bert_base();
    c.vocab_size = 1000;
    return Encoder(c, random_weights(c, 1, 0.02f));
  }();
  return e;
}

std::vector<int> ids(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 5);
  v.front() = 2;
  v.back() = 3;
  return v;
}

void BM_BertBaseForward(benchmark::State& state) {
  const auto input = ids(static_cast<std::size_t>(state.range(0)));
  const Encoder& e = base_encoder();
  for (auto _ : state) benchmark::DoNotOptimize(e.forward(input));
  state.SetLabel("12 layers, hidden 768");
}
BENCHMARK(BM_BertBaseForward)->Arg(12)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_BertBaseEncodeTrace(benchmark::State& state) {
  Tokenization tok;
  tok.piece_ids = ids(16);
  for (auto _ : state) benchmark::DoNotOptimize(base_encoder().encode(tok, PieceSpan{2, 4}, CapturePolicy{}));
}
BENCHMARK(BM_BertBaseEncodeTrace)->Unit(benchmark::kMillisecond);

void BM_BatchThreads(benchmark::State& state) {
  std::vector<EncodeRequest> requests;
  for (int i = 0; i < 16; ++i) {
    Tokenization tok;
    tok.piece_ids = ids(12 + static_cast<std::size_t>(i));
    requests.push_back({std::move(tok), PieceSpan{1, 2}, "s" + std::to_string(i)});
  }
  const auto threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(base_encoder(), requests, CapturePolicy{}, threads));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(requests.size()));
}
BENCHMARK(BM_BatchThreads)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
