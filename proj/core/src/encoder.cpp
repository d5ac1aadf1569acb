#include "ctxprobe/encoder.hpp"

#include <cmath>
#include <sstream>

#include "ctxprobe/error.hpp"
#include "ctxprobe/parallel.hpp"

namespace ctxprobe {

using nlohmann::json;

std::string_view to_string(SaCapturePoint v) {
  return v == SaCapturePoint::kPostProjectionPreResidual ? "post_projection_pre_residual"
                                                         : "post_attention_layernorm";
}

std::string_view to_string(StaticEmbeddingKind v) {
  return v == StaticEmbeddingKind::kWordTableRow ? "word_table_row" : "embedding_layer_output";
}

std::string_view to_string(Pooling v) {
  switch (v) {
    case Pooling::kFirstPiece:
      return "first_piece";
    case Pooling::kMeanPieces:
      return "mean_pieces";
    case Pooling::kLastPiece:
      return "last_piece";
  }
  return "first_piece";
}

std::string_view to_string(Sublayer v) {
  switch (v) {
    case Sublayer::kSA:
      return "SA";
    case Sublayer::kActs:
      return "Acts";
    case Sublayer::kOut:
      return "Out";
  }
  return "SA";
}

SaCapturePoint parse_sa_capture(std::string_view s) {
  if (s == "post_projection_pre_residual") return SaCapturePoint::kPostProjectionPreResidual;
  if (s == "post_attention_layernorm") return SaCapturePoint::kPostAttentionLayerNorm;
  throw ConfigError("unknown SA capture point '" + std::string(s) + "'");
}

StaticEmbeddingKind parse_static_kind(std::string_view s) {
  if (s == "word_table_row") return StaticEmbeddingKind::kWordTableRow;
  if (s == "embedding_layer_output") return StaticEmbeddingKind::kEmbeddingLayerOutput;
  throw ConfigError("unknown static embedding kind '" + std::string(s) + "'");
}

Pooling parse_pooling(std::string_view s) {
  if (s == "first_piece") return Pooling::kFirstPiece;
  if (s == "mean_pieces") return Pooling::kMeanPieces;
  if (s == "last_piece") return Pooling::kLastPiece;
  throw ConfigError("unknown pooling '" + std::string(s) + "'");
}

Sublayer parse_sublayer(std::string_view s) {
  if (s == "SA" || s == "sa") return Sublayer::kSA;
  if (s == "Acts" || s == "acts") return Sublayer::kActs;
  if (s == "Out" || s == "out") return Sublayer::kOut;
  throw ConfigError("unknown sublayer '" + std::string(s) + "'");
}

json CapturePolicy::to_json() const {
  return {{"sa_point", to_string(sa_point)},
          {"static_embedding_kind", to_string(static_kind)},
          {"pooling", to_string(pooling)}};
}

CapturePolicy CapturePolicy::from_json(const json& j) {
  try {
    CapturePolicy p;
    p.sa_point = parse_sa_capture(j.at("sa_point").get<std::string>());
    p.static_kind = parse_static_kind(j.at("static_embedding_kind").get<std::string>());
    p.pooling = parse_pooling(j.at("pooling").get<std::string>());
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("capture policy: ") + e.what());
  }
}

const std::vector<float>& TraceSet::at(int layer, Sublayer sublayer) const {
  if (layer < 1 || static_cast<std::size_t>(layer) > layers.size()) {
    throw CoverageError("trace '" + sentence_id + "' has no layer " + std::to_string(layer));
  }
  const LayerTrace& lt = layers[static_cast<std::size_t>(layer - 1)];
  switch (sublayer) {
    case Sublayer::kSA:
      return lt.sa;
    case Sublayer::kActs:
      return lt.acts;
    case Sublayer::kOut:
      return lt.out;
  }
  return lt.out;
}

namespace {

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  }
  return t;
}

// x * w_t + b where w_t is already [in x out].
Matrix dense(const Matrix& x, const Matrix& w_t, const std::vector<float>& b) {
  Matrix y = matmul(x, w_t);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return y;
}

Matrix slice_rows(const Matrix& m, PieceSpan span) {
  Matrix out(span.length(), m.cols());
  for (std::size_t i = 0; i < span.length(); ++i) {
    auto src = m.row(span.begin + i);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

Encoder::Encoder(const ModelConfig& config, ModelWeights weights) : config_(config) {
  config_.validate();
  if (weights.layers.size() != static_cast<std::size_t>(config_.num_layers)) {
    throw ShapeError("encoder: weights have " + std::to_string(weights.layers.size()) +
                     " layers but config declares " + std::to_string(config_.num_layers));
  }
  word_embeddings_ = std::move(weights.word_embeddings);
  position_embeddings_ = std::move(weights.position_embeddings);
  token_type_embeddings_ = std::move(weights.token_type_embeddings);
  embedding_ln_ = std::move(weights.embedding_ln);
  const auto h = static_cast<std::size_t>(config_.hidden);
  layers_.reserve(weights.layers.size());
  for (auto& lw : weights.layers) {
    PreparedLayer p;
    p.qkv_t = Matrix(h, 3 * h);
    const Matrix* parts[3] = {&lw.query_w, &lw.key_w, &lw.value_w};
    for (std::size_t part = 0; part < 3; ++part) {
      for (std::size_t o = 0; o < h; ++o) {
        for (std::size_t i = 0; i < h; ++i) p.qkv_t(i, part * h + o) = (*parts[part])(o, i);
      }
    }
    p.qkv_b = lw.query_b;
    p.qkv_b.insert(p.qkv_b.end(), lw.key_b.begin(), lw.key_b.end());
    p.qkv_b.insert(p.qkv_b.end(), lw.value_b.begin(), lw.value_b.end());
    p.attn_out_t = transpose(lw.attn_out_w);
    p.attn_out_b = std::move(lw.attn_out_b);
    p.attn_ln = std::move(lw.attn_ln);
    p.ffn_in_t = transpose(lw.ffn_in_w);
    p.ffn_in_b = std::move(lw.ffn_in_b);
    p.ffn_out_t = transpose(lw.ffn_out_w);
    p.ffn_out_b = std::move(lw.ffn_out_b);
    p.ffn_ln = std::move(lw.ffn_ln);
    lw = EncoderLayerWeights{};
    layers_.push_back(std::move(p));
  }
}

Matrix Encoder::embed(std::span<const int> piece_ids) const {
  const std::size_t seq = piece_ids.size();
  if (seq > static_cast<std::size_t>(config_.max_positions)) {
    throw ValidationError("sequence of " + std::to_string(seq) + " pieces exceeds max_positions " +
                          std::to_string(config_.max_positions));
  }
  Matrix x(seq, static_cast<std::size_t>(config_.hidden));
  const auto type_row = token_type_embeddings_.row(0);
  for (std::size_t i = 0; i < seq; ++i) {
    const int id = piece_ids[i];
    if (id < 0 || id >= config_.vocab_size) {
      throw ValidationError("piece id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(config_.vocab_size));
    }
    const auto word = word_embeddings_.row(static_cast<std::size_t>(id));
    const auto pos = position_embeddings_.row(i);
    auto out = x.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (word[j] + type_row[j]) + pos[j];
  }
  layer_norm_rows_inplace(x, embedding_ln_.gamma, embedding_ln_.beta, config_.layer_norm_eps);
  return x;
}

Matrix Encoder::forward(std::span<const int> piece_ids, const ForwardObserver& observer) const {
  Matrix x = embed(piece_ids);
  if (observer) observer(0, CapturePoint::kEmbeddings, x);
  const std::size_t seq = x.rows();
  const auto h = static_cast<std::size_t>(config_.hidden);
  const auto heads = static_cast<std::size_t>(config_.heads);
  const auto dh = static_cast<std::size_t>(config_.head_dim);
  const float scale = std::sqrt(static_cast<float>(dh));

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const PreparedLayer& p = layers_[l];
    const int layer_no = static_cast<int>(l) + 1;
    const Matrix qkv = dense(x, p.qkv_t, p.qkv_b);

    Matrix context(seq, h);
    Matrix probs_all;
    if (observer) probs_all = Matrix(heads * seq, seq);
    for (std::size_t head = 0; head < heads; ++head) {
      const Matrix q = slice_cols(qkv, head * dh, dh);
      const Matrix k = slice_cols(qkv, h + head * dh, dh);
      const Matrix v = slice_cols(qkv, 2 * h + head * dh, dh);
      Matrix scores = matmul_transposed(q, k);
      for (float& s : scores.data()) s /= scale;
      softmax_rows_inplace(scores);
      const Matrix ctx = matmul(scores, v);
      for (std::size_t i = 0; i < seq; ++i) {
        auto src = ctx.row(i);
        std::copy(src.begin(), src.end(), context.row(i).begin() + static_cast<std::ptrdiff_t>(head * dh));
      }
      if (observer) {
        for (std::size_t i = 0; i < seq; ++i) {
          auto src = scores.row(i);
          std::copy(src.begin(), src.end(), probs_all.row(head * seq + i).begin());
        }
      }
    }
    if (observer) observer(layer_no, CapturePoint::kAttentionProbs, probs_all);

    Matrix attn = dense(context, p.attn_out_t, p.attn_out_b);
    if (observer) observer(layer_no, CapturePoint::kSaPreResidual, attn);
    add_inplace(attn, x);
    layer_norm_rows_inplace(attn, p.attn_ln.gamma, p.attn_ln.beta, config_.layer_norm_eps);
    if (observer) observer(layer_no, CapturePoint::kSaPostLayerNorm, attn);

    Matrix inter = dense(attn, p.ffn_in_t, p.ffn_in_b);
    apply_activation_inplace(inter, config_.activation);
    if (observer) observer(layer_no, CapturePoint::kActs, inter);

    Matrix out = dense(inter, p.ffn_out_t, p.ffn_out_b);
    add_inplace(out, attn);
    layer_norm_rows_inplace(out, p.ffn_ln.gamma, p.ffn_ln.beta, config_.layer_norm_eps);
    if (observer) observer(layer_no, CapturePoint::kOut, out);
    x = std::move(out);
  }
  return x;
}

SpanCapture Encoder::capture_span(const Tokenization& tok, PieceSpan span) const {
  if (span.begin >= span.end || span.end > tok.piece_ids.size()) {
    std::ostringstream os;
    os << "keyword span [" << span.begin << ", " << span.end << ") is not inside a sequence of "
       << tok.piece_ids.size() << " pieces";
    throw ValidationError(os.str());
  }
  SpanCapture cap;
  cap.span = span;
  cap.word_rows = Matrix(span.length(), static_cast<std::size_t>(config_.hidden));
  for (std::size_t i = 0; i < span.length(); ++i) {
    const int id = tok.piece_ids[span.begin + i];
    if (id < 0 || id >= config_.vocab_size) {
      throw ValidationError("piece id " + std::to_string(id) + " outside vocabulary");
    }
    auto src = word_embeddings_.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), cap.word_rows.row(i).begin());
  }
  const auto n = static_cast<std::size_t>(config_.num_layers);
  cap.sa_pre_residual.resize(n);
  cap.sa_post_layer_norm.resize(n);
  cap.acts.resize(n);
  cap.out.resize(n);
  forward(tok.piece_ids, [&](int layer, CapturePoint point, const Matrix& value) {
    const std::size_t l = layer > 0 ? static_cast<std::size_t>(layer - 1) : 0;
    switch (point) {
      case CapturePoint::kEmbeddings:
        cap.embedding_rows = slice_rows(value, span);
        break;
      case CapturePoint::kAttentionProbs:
        break;
      case CapturePoint::kSaPreResidual:
        cap.sa_pre_residual[l] = slice_rows(value, span);
        break;
      case CapturePoint::kSaPostLayerNorm:
        cap.sa_post_layer_norm[l] = slice_rows(value, span);
        break;
      case CapturePoint::kActs:
        cap.acts[l] = slice_rows(value, span);
        break;
      case CapturePoint::kOut:
        cap.out[l] = slice_rows(value, span);
        break;
    }
  });
  return cap;
}

std::vector<float> pool_rows(const Matrix& rows, Pooling pooling) {
  if (rows.rows() == 0) throw ValidationError("cannot pool an empty span");
  switch (pooling) {
    case Pooling::kFirstPiece: {
      auto r = rows.row(0);
      return {r.begin(), r.end()};
    }
    case Pooling::kLastPiece: {
      auto r = rows.row(rows.rows() - 1);
      return {r.begin(), r.end()};
    }
    case Pooling::kMeanPieces: {
      std::vector<float> acc(rows.cols(), 0.0f);
      for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto r = rows.row(i);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += r[j];
      }
      // A single row must pool to itself bit-exactly.
      if (rows.rows() > 1) {
        const float n = static_cast<float>(rows.rows());
        for (float& v : acc) v /= n;
      }
      return acc;
    }
  }
  return {};
}

TraceSet make_trace(const SpanCapture& capture, const CapturePolicy& policy, std::string sentence_id) {
  TraceSet t;
  t.sentence_id = std::move(sentence_id);
  t.span = capture.span;
  t.policy = policy;
  t.static_emb = pool_rows(policy.static_kind == StaticEmbeddingKind::kWordTableRow ? capture.word_rows
                                                                                    : capture.embedding_rows,
                           policy.pooling);
  t.layers.resize(capture.out.size());
  for (std::size_t l = 0; l < capture.out.size(); ++l) {
    const Matrix& sa = policy.sa_point == SaCapturePoint::kPostProjectionPreResidual
                           ? capture.sa_pre_residual[l]
                           : capture.sa_post_layer_norm[l];
    t.layers[l].sa = pool_rows(sa, policy.pooling);
    t.layers[l].acts = pool_rows(capture.acts[l], policy.pooling);
    t.layers[l].out = pool_rows(capture.out[l], policy.pooling);
  }
  return t;
}

TraceSet Encoder::encode(const Tokenization& tok, PieceSpan span, const CapturePolicy& policy,
                         std::string sentence_id) const {
  return make_trace(capture_span(tok, span), policy, std::move(sentence_id));
}

std::vector<TraceSet> encode_batch(const Encoder& encoder, std::span<const EncodeRequest> requests,
                                   const CapturePolicy& policy, unsigned threads) {
  std::vector<TraceSet> out(requests.size());
  parallel_for(requests.size(), threads, [&](std::size_t i) {
    out[i] = encoder.encode(requests[i].tokens, requests[i].span, policy, requests[i].sentence_id);
  });
  return out;
}

}  // namespace ctxprobe
