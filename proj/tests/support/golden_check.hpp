#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "ctxprobe/encoder.hpp"
#include "fixtures.hpp"

namespace fixtures {

struct PointDiff {
  double max_abs = 0.0;
  double min_cosine = 1.0;
  std::size_t vectors = 0;
};

inline void accumulate_diff(PointDiff& d, const ctxprobe::Matrix& got, const ctxprobe::Matrix& ref) {
  if (got.rows() != ref.rows() || got.cols() != ref.cols()) {
    d.max_abs = INFINITY;
    d.min_cosine = -1.0;
    return;
  }
  for (std::size_t r = 0; r < ref.rows(); ++r) {
    double dot = 0.0, ng = 0.0, nr = 0.0;
    for (std::size_t c = 0; c < ref.cols(); ++c) {
      const double g = got(r, c), e = ref(r, c);
      d.max_abs = std::max(d.max_abs, std::abs(g - e));
      dot += g * e;
      ng += g * g;
      nr += e * e;
    }
    d.min_cosine = std::min(d.min_cosine, dot / std::sqrt(ng * nr));
    ++d.vectors;
  }
}

struct GoldenComparison {
  std::size_t sentences = 0;
  std::size_t ids_mismatch = 0;
  // Keyed by capture-point kind: embeddings, sa_pre_residual, sa_post_ln, acts, out, final_hidden.
  std::map<std::string, PointDiff> points;
  std::size_t tensors_compared = 0;

  double worst_max_abs() const {
    double m = 0.0;
    for (const auto& [_, d] : points) m = std::max(m, d.max_abs);
    return m;
  }
  double worst_cosine() const {
    double m = 1.0;
    for (const auto& [_, d] : points) m = std::min(m, d.min_cosine);
    return m;
  }
};

// Runs the tiny model over every golden sentence and compares all capture
// points of all layers against the reference dump.
inline GoldenComparison compare_with_goldens(const ctxprobe::Model& model, const Goldens& goldens) {
  const ctxprobe::Encoder enc(model.config, model.weights);
  GoldenComparison out;
  for (const auto& g : goldens.sentences) {
    ++out.sentences;
    const auto tok = ctxprobe::tokenize(g.text, model.vocab, 128);
    if (tok.piece_ids != g.ids) ++out.ids_mismatch;
    std::map<std::string, ctxprobe::Matrix> got;
    const auto final_hidden = enc.forward(g.ids, [&](int layer, ctxprobe::CapturePoint p, const ctxprobe::Matrix& v) {
      const std::string prefix = "layer." + std::to_string(layer) + ".";
      switch (p) {
        case ctxprobe::CapturePoint::kEmbeddings: got["embeddings"] = v; break;
        case ctxprobe::CapturePoint::kSaPreResidual: got[prefix + "sa_pre_residual"] = v; break;
        case ctxprobe::CapturePoint::kSaPostLayerNorm: got[prefix + "sa_post_ln"] = v; break;
        case ctxprobe::CapturePoint::kActs: got[prefix + "acts"] = v; break;
        case ctxprobe::CapturePoint::kOut: got[prefix + "out"] = v; break;
        case ctxprobe::CapturePoint::kAttentionProbs: break;
      }
    });
    got["final_hidden"] = final_hidden;
    for (const auto& [name, ref] : g.tensors) {
      const auto dot = name.rfind('.');
      const std::string kind = dot == std::string::npos ? name : name.substr(dot + 1);
      auto& d = out.points[kind];
      auto it = got.find(name);
      if (it == got.end()) {
        d.max_abs = INFINITY;
        d.min_cosine = -1.0;
        continue;
      }
      accumulate_diff(d, it->second, ref);
      ++out.tensors_compared;
    }
  }
  return out;
}

}  // namespace fixtures
