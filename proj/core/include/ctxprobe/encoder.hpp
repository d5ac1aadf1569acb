#pragma once

#include <array>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprobe/model.hpp"
#include "ctxprobe/tensor.hpp"
#include "ctxprobe/tokenizer.hpp"

namespace ctxprobe {

// Where the Self-Attention representation is read inside a layer.
enum class SaCapturePoint {
  kPostProjectionPreResidual,  // attention output projection, before residual + LayerNorm
  kPostAttentionLayerNorm,     // after residual + LayerNorm (the FFN input)
};

enum class StaticEmbeddingKind {
  kWordTableRow,          // raw word-embedding table rows
  kEmbeddingLayerOutput,  // word + position + type, after the embedding LayerNorm
};

enum class Pooling { kFirstPiece, kMeanPieces, kLastPiece };

enum class Sublayer { kSA = 0, kActs = 1, kOut = 2 };
inline constexpr std::array<Sublayer, 3> kAllSublayers = {Sublayer::kSA, Sublayer::kActs, Sublayer::kOut};

std::string_view to_string(SaCapturePoint v);
std::string_view to_string(StaticEmbeddingKind v);
std::string_view to_string(Pooling v);
std::string_view to_string(Sublayer v);
SaCapturePoint parse_sa_capture(std::string_view s);
StaticEmbeddingKind parse_static_kind(std::string_view s);
Pooling parse_pooling(std::string_view s);
Sublayer parse_sublayer(std::string_view s);

struct CapturePolicy {
  SaCapturePoint sa_point = SaCapturePoint::kPostProjectionPreResidual;
  StaticEmbeddingKind static_kind = StaticEmbeddingKind::kWordTableRow;
  Pooling pooling = Pooling::kFirstPiece;

  nlohmann::json to_json() const;
  static CapturePolicy from_json(const nlohmann::json& j);
  bool operator==(const CapturePolicy&) const = default;
};

struct LayerTrace {
  std::vector<float> sa;    // hidden
  std::vector<float> acts;  // intermediate
  std::vector<float> out;   // hidden

  bool operator==(const LayerTrace&) const = default;
};

// Keyword-pooled representations of one sentence at every capture point.
struct TraceSet {
  std::string sentence_id;
  PieceSpan span;
  CapturePolicy policy;
  std::vector<float> static_emb;
  std::vector<LayerTrace> layers;  // layers[0] is encoder layer 1

  // `layer` is 1-based.
  const std::vector<float>& at(int layer, Sublayer sublayer) const;
  bool operator==(const TraceSet&) const = default;
};

enum class CapturePoint {
  kEmbeddings,        // layer 0, [seq x hidden]
  kAttentionProbs,    // [heads * seq x seq], head-major
  kSaPreResidual,     // [seq x hidden]
  kSaPostLayerNorm,   // [seq x hidden]
  kActs,              // [seq x intermediate]
  kOut,               // [seq x hidden]
};

// Called once per capture point during a forward pass; `layer` is 1-based
// (0 for the embeddings).
using ForwardObserver = std::function<void(int layer, CapturePoint point, const Matrix& value)>;

// Rows of the keyword span at every capture point, from a single forward
// pass. Every capture policy can be derived from it.
struct SpanCapture {
  PieceSpan span;
  Matrix word_rows;       // word-embedding table rows
  Matrix embedding_rows;  // embedding layer output rows
  std::vector<Matrix> sa_pre_residual, sa_post_layer_norm, acts, out;  // per layer
};

// Forward pass of a BERT-style encoder with dropout disabled. The encoder
// stores its weights in a compute-friendly layout; it is immutable after
// construction and safe to share between threads.
class Encoder {
 public:
  Encoder(const ModelConfig& config, ModelWeights weights);

  const ModelConfig& config() const noexcept { return config_; }

  // Word + token-type + position embeddings followed by LayerNorm.
  Matrix embed(std::span<const int> piece_ids) const;
  Matrix embed(const Tokenization& tok) const { return embed(tok.piece_ids); }

  // Runs all layers and returns the final hidden states.
  Matrix forward(std::span<const int> piece_ids, const ForwardObserver& observer = {}) const;

  SpanCapture capture_span(const Tokenization& tok, PieceSpan span) const;

  TraceSet encode(const Tokenization& tok, PieceSpan span, const CapturePolicy& policy,
                  std::string sentence_id = {}) const;

 private:
  struct PreparedLayer {
    Matrix qkv_t;  // [hidden x 3*hidden]
    std::vector<float> qkv_b;
    Matrix attn_out_t;
    std::vector<float> attn_out_b;
    LayerNormParams attn_ln;
    Matrix ffn_in_t;
    std::vector<float> ffn_in_b;
    Matrix ffn_out_t;
    std::vector<float> ffn_out_b;
    LayerNormParams ffn_ln;
  };

  ModelConfig config_;
  Matrix word_embeddings_;
  Matrix position_embeddings_;
  Matrix token_type_embeddings_;
  LayerNormParams embedding_ln_;
  std::vector<PreparedLayer> layers_;
};

std::vector<float> pool_rows(const Matrix& rows, Pooling pooling);

TraceSet make_trace(const SpanCapture& capture, const CapturePolicy& policy, std::string sentence_id = {});

struct EncodeRequest {
  Tokenization tokens;
  PieceSpan span;
  std::string sentence_id;
};

// Encodes requests on up to `threads` workers; output order follows input
// order and each trace is independent of scheduling.
std::vector<TraceSet> encode_batch(const Encoder& encoder, std::span<const EncodeRequest> requests,
                                   const CapturePolicy& policy, unsigned threads = 1);

}  // namespace ctxprobe
