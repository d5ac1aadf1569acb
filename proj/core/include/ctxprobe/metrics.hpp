#pragma once

#include <array>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "ctxprobe/datasets.hpp"
#include "ctxprobe/encoder.hpp"

namespace ctxprobe {

// dot(a, b) / (|a| |b|), accumulated in double and clamped to [-1, 1].
// Throws ShapeError on length mismatch and ValidationError if either vector
// is zero (similarity undefined).
double cosine(std::span<const float> a, std::span<const float> b);

// Cosine between the pooled keyword representations of a pair at
// (layer, sublayer); layer is 1-based. ConfigError if the traces were
// captured under different policies.
double sublayer_sim(const TraceSet& a, const TraceSet& b, int layer, Sublayer sublayer);

// Cosine between a sub-layer representation and the static embedding. Acts
// has no static counterpart of its dimension and raises ValidationError.
double we_sim(const TraceSet& trace, int layer, Sublayer sublayer);

struct SimilarityCurve {
  Sublayer sublayer = Sublayer::kSA;
  std::vector<double> values;  // one per layer
};

struct CurveSet {
  std::vector<SimilarityCurve> sublayer_sim;  // SA, Acts, Out; mean over pairs
  std::vector<SimilarityCurve> we_sim;        // SA, Out; mean over samples
  std::size_t pairs = 0;
  std::size_t samples = 0;
};

// Pair indices refer to positions in `traces`.
CurveSet average_curves(std::span<const TraceSet> traces, std::span<const SentencePair> pairs);

// Dataset-level averages of one sub-layer: mean over layers of the per-layer
// curve values.
struct SublayerSummary {
  double slsim = 0.0;
  std::optional<double> wesim;  // absent for Acts
  double pca_l2 = 0.0;
};

struct ContextualizationSummary {
  CurveSet curves;
  std::array<std::vector<double>, 3> pca_l2_per_layer;  // indexed by Sublayer
  std::array<SublayerSummary, 3> averages;              // indexed by Sublayer
};

// Curves plus PCA distances: per (layer, sublayer) a 2-component PCA is fit on
// all traces, and the squared L2 distance between the projected pair members
// is averaged over pairs, then over layers.
ContextualizationSummary summarize(std::span<const TraceSet> traces, std::span<const SentencePair> pairs);

// Representations of every trace at one cell, stacked as rows.
Matrix stack_cell(std::span<const TraceSet> traces, int layer, Sublayer sublayer);

}  // namespace ctxprobe
