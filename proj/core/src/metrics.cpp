#include "ctxprobe/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ctxprobe/error.hpp"
#include "ctxprobe/pca.hpp"

namespace ctxprobe {

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: similarity is undefined for a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double sublayer_sim(const TraceSet& a, const TraceSet& b, int layer, Sublayer sublayer) {
  if (!(a.policy == b.policy)) {
    throw ConfigError("sublayer_sim: traces '" + a.sentence_id + "' and '" + b.sentence_id +
                      "' were captured under different policies");
  }
  return cosine(a.at(layer, sublayer), b.at(layer, sublayer));
}

double we_sim(const TraceSet& trace, int layer, Sublayer sublayer) {
  const auto& v = trace.at(layer, sublayer);
  if (sublayer == Sublayer::kActs || v.size() != trace.static_emb.size()) {
    throw ValidationError("we_sim: undefined for " + std::string(to_string(sublayer)) + " (dimension " +
                          std::to_string(v.size()) + " vs static embedding " +
                          std::to_string(trace.static_emb.size()) + ")");
  }
  return cosine(v, trace.static_emb);
}

namespace {

std::size_t common_layers(std::span<const TraceSet> traces) {
  if (traces.empty()) throw ValidationError("empty dataset: no traces");
  const std::size_t n = traces.front().layers.size();
  for (const auto& t : traces) {
    if (t.layers.size() != n) {
      throw CoverageError("trace '" + t.sentence_id + "' has " + std::to_string(t.layers.size()) +
                          " layers, expected " + std::to_string(n));
    }
  }
  return n;
}

void check_pairs(std::span<const TraceSet> traces, std::span<const SentencePair> pairs) {
  if (pairs.empty()) throw ValidationError("empty dataset: no sentence pairs");
  for (const auto& p : pairs) {
    if (p.a >= traces.size() || p.b >= traces.size()) {
      throw CoverageError("pair for keyword '" + p.keyword + "' references a sample without a trace");
    }
  }
}

}  // namespace

CurveSet average_curves(std::span<const TraceSet> traces, std::span<const SentencePair> pairs) {
  const std::size_t layers = common_layers(traces);
  check_pairs(traces, pairs);
  CurveSet cs;
  cs.pairs = pairs.size();
  cs.samples = traces.size();
  for (Sublayer s : kAllSublayers) {
    SimilarityCurve c{s, std::vector<double>(layers, 0.0)};
    for (std::size_t l = 0; l < layers; ++l) {
      double acc = 0.0;
      for (const auto& p : pairs) acc += sublayer_sim(traces[p.a], traces[p.b], static_cast<int>(l + 1), s);
      c.values[l] = acc / static_cast<double>(pairs.size());
    }
    cs.sublayer_sim.push_back(std::move(c));
  }
  for (Sublayer s : {Sublayer::kSA, Sublayer::kOut}) {
    SimilarityCurve c{s, std::vector<double>(layers, 0.0)};
    for (std::size_t l = 0; l < layers; ++l) {
      double acc = 0.0;
      for (const auto& t : traces) acc += we_sim(t, static_cast<int>(l + 1), s);
      c.values[l] = acc / static_cast<double>(traces.size());
    }
    cs.we_sim.push_back(std::move(c));
  }
  return cs;
}

Matrix stack_cell(std::span<const TraceSet> traces, int layer, Sublayer sublayer) {
  if (traces.empty()) throw ValidationError("empty dataset: no traces");
  const std::size_t d = traces.front().at(layer, sublayer).size();
  Matrix x(traces.size(), d);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& v = traces[i].at(layer, sublayer);
    if (v.size() != d) {
      throw CoverageError("trace '" + traces[i].sentence_id + "' has a " + std::to_string(v.size()) +
                          "-dim vector at layer " + std::to_string(layer) + " " +
                          std::string(to_string(sublayer)) + ", expected " + std::to_string(d));
    }
    std::copy(v.begin(), v.end(), x.row(i).begin());
  }
  return x;
}

ContextualizationSummary summarize(std::span<const TraceSet> traces, std::span<const SentencePair> pairs) {
  ContextualizationSummary sum;
  sum.curves = average_curves(traces, pairs);
  const std::size_t layers = traces.front().layers.size();
  for (Sublayer s : kAllSublayers) {
    auto& per_layer = sum.pca_l2_per_layer[static_cast<std::size_t>(s)];
    per_layer.assign(layers, 0.0);
    for (std::size_t l = 0; l < layers; ++l) {
      const int layer = static_cast<int>(l + 1);
      const PcaModel model = pca_fit(stack_cell(traces, layer, s), 2);
      double acc = 0.0;
      for (const auto& p : pairs) {
        acc += squared_l2_pcs(model, traces[p.a].at(layer, s), traces[p.b].at(layer, s));
      }
      per_layer[l] = acc / static_cast<double>(pairs.size());
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
  };
  for (Sublayer s : kAllSublayers) {
    const auto i = static_cast<std::size_t>(s);
    sum.averages[i].slsim = mean(sum.curves.sublayer_sim[i].values);
    sum.averages[i].pca_l2 = mean(sum.pca_l2_per_layer[i]);
  }
  sum.averages[static_cast<std::size_t>(Sublayer::kSA)].wesim = mean(sum.curves.we_sim[0].values);
  sum.averages[static_cast<std::size_t>(Sublayer::kOut)].wesim = mean(sum.curves.we_sim[1].values);
  return sum;
}

}  // namespace ctxprobe
