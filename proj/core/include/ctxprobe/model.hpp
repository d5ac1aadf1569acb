#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ctxprobe/safetensors.hpp"
#include "ctxprobe/tensor.hpp"
#include "ctxprobe/tokenizer.hpp"

namespace ctxprobe {

// Encoder hyperparameters. config.json uses the canonical BERT key names:
//   num_hidden_layers, hidden_size, num_attention_heads, intermediate_size,
//   vocab_size, max_position_embeddings, type_vocab_size, layer_norm_eps,
//   hidden_act ("gelu" | "relu").
struct ModelConfig {
  int num_layers = 12;
  int hidden = 768;
  int heads = 12;
  int head_dim = 64;
  int intermediate = 3072;
  int vocab_size = 30522;
  int max_positions = 512;
  int type_vocab_size = 2;
  float layer_norm_eps = 1e-12f;
  Activation activation = Activation::kGelu;

  static ModelConfig bert_base();
  static ModelConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // Throws ConfigError unless hidden == heads * head_dim and all sizes are positive.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
};

// Dense weights keep the [out_features x in_features] layout of the
// checkpoint.
struct EncoderLayerWeights {
  Matrix query_w, key_w, value_w;
  std::vector<float> query_b, key_b, value_b;
  Matrix attn_out_w;
  std::vector<float> attn_out_b;
  LayerNormParams attn_ln;
  Matrix ffn_in_w;  // [intermediate x hidden]
  std::vector<float> ffn_in_b;
  Matrix ffn_out_w;  // [hidden x intermediate]
  std::vector<float> ffn_out_b;
  LayerNormParams ffn_ln;
};

struct ModelWeights {
  Matrix word_embeddings;        // [vocab x hidden]
  Matrix position_embeddings;    // [max_positions x hidden]
  Matrix token_type_embeddings;  // [type_vocab x hidden]
  LayerNormParams embedding_ln;
  std::vector<EncoderLayerWeights> layers;
};

struct ExportManifest {
  std::string source_checkpoint;
  std::map<std::string, std::string> file_sha256;  // file name -> hex digest
  nlohmann::json raw;
};

struct Model {
  ModelConfig config;
  ModelWeights weights;
  Vocab vocab;
  ExportManifest manifest;
  std::string weights_sha256;
  std::filesystem::path dir;
};

ModelConfig load_config(const std::filesystem::path& path);

// Extracts every tensor by its canonical name (an optional "bert." prefix is
// accepted), checks shapes against `config` and finiteness.
ModelWeights load_weights(const SafetensorsFile& file, const ModelConfig& config);

// Reads config.json, model.safetensors, vocab.txt and manifest.json from
// `dir`, verifying every checksum the manifest records.
Model load_model(const std::filesystem::path& dir);

// Canonical tensor names paired with their tensors, in checkpoint layout.
std::vector<NamedTensor> named_tensors(const ModelWeights& weights);

// Writes a complete model directory (used to build synthetic models).
void save_model(const std::filesystem::path& dir, const ModelConfig& config,
                const ModelWeights& weights, const std::vector<std::string>& vocab_tokens,
                const std::string& source_checkpoint);

// Gaussian-initialised weights with the shapes `config` requires.
ModelWeights random_weights(const ModelConfig& config, std::uint64_t seed, float scale = 0.1f);

}  // namespace ctxprobe
