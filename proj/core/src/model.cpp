#include "ctxprobe/model.hpp"

#include <sstream>

#include "ctxprobe/checksum.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/io.hpp"
#include "ctxprobe/rng.hpp"

namespace ctxprobe {

using nlohmann::json;

ModelConfig ModelConfig::bert_base() { return ModelConfig{}; }

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.num_layers = j.at("num_hidden_layers").get<int>();
    c.hidden = j.at("hidden_size").get<int>();
    c.heads = j.at("num_attention_heads").get<int>();
    c.intermediate = j.at("intermediate_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_position_embeddings").get<int>();
    c.type_vocab_size = j.value("type_vocab_size", 2);
    c.layer_norm_eps = j.value("layer_norm_eps", 1e-12f);
    const std::string act = j.value("hidden_act", std::string("gelu"));
    if (act == "gelu") {
      c.activation = Activation::kGelu;
    } else if (act == "relu") {
      c.activation = Activation::kRelu;
    } else {
      throw ConfigError("config: unsupported hidden_act '" + act + "' (expected gelu or relu)");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.heads <= 0) throw ConfigError("config: num_attention_heads must be positive");
  c.head_dim = c.hidden / c.heads;
  c.validate();
  return c;
}

json ModelConfig::to_json() const {
  return {{"num_hidden_layers", num_layers},
          {"hidden_size", hidden},
          {"num_attention_heads", heads},
          {"intermediate_size", intermediate},
          {"vocab_size", vocab_size},
          {"max_position_embeddings", max_positions},
          {"type_vocab_size", type_vocab_size},
          {"layer_norm_eps", layer_norm_eps},
          {"hidden_act", activation == Activation::kGelu ? "gelu" : "relu"}};
}

void ModelConfig::validate() const {
  if (num_layers <= 0 || hidden <= 0 || heads <= 0 || intermediate <= 0 || vocab_size <= 0 ||
      max_positions <= 0 || type_vocab_size <= 0) {
    throw ConfigError("config: all sizes must be positive");
  }
  if (hidden != heads * head_dim) {
    std::ostringstream os;
    os << "config: hidden_size " << hidden << " is not num_attention_heads " << heads
       << " x head_dim " << head_dim;
    throw ConfigError(os.str());
  }
  if (!(layer_norm_eps >= 0.0f)) throw ConfigError("config: layer_norm_eps must be non-negative");
}

ModelConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ModelConfig::from_json(j);
}

namespace {

std::string layer_prefix(int l) { return "encoder.layer." + std::to_string(l) + "."; }

class TensorReader {
 public:
  TensorReader(const SafetensorsFile& file) : file_(file) {
    for (const auto& [name, info] : file.tensors()) {
      if (name.rfind("bert.", 0) == 0) {
        prefix_ = "bert.";
        break;
      }
    }
  }

  std::vector<float> read(const std::string& name, const std::vector<std::size_t>& shape) const {
    const std::string full = prefix_ + name;
    auto it = file_.tensors().find(full);
    if (it == file_.tensors().end()) throw LoadError("weights: missing tensor '" + full + "'");
    if (it->second.shape != shape) {
      std::ostringstream os;
      os << "weights: tensor '" << full << "' has shape " << json(it->second.shape).dump()
         << ", expected " << json(shape).dump();
      throw ShapeError(os.str());
    }
    std::vector<float> v = file_.load_f32(full);
    if (!all_finite(v)) throw LoadError("weights: tensor '" + full + "' contains non-finite values");
    return v;
  }

  Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) const {
    return Matrix(rows, cols, read(name, {rows, cols}));
  }

  std::vector<float> vec(const std::string& name, std::size_t n) const { return read(name, {n}); }

  LayerNormParams layer_norm(const std::string& base, std::size_t n) const {
    return {vec(base + ".weight", n), vec(base + ".bias", n)};
  }

 private:
  const SafetensorsFile& file_;
  std::string prefix_;
};

}  // namespace

ModelWeights load_weights(const SafetensorsFile& file, const ModelConfig& config) {
  config.validate();
  const TensorReader r(file);
  const auto h = static_cast<std::size_t>(config.hidden);
  const auto inter = static_cast<std::size_t>(config.intermediate);
  ModelWeights w;
  w.word_embeddings = r.matrix("embeddings.word_embeddings.weight", config.vocab_size, h);
  w.position_embeddings = r.matrix("embeddings.position_embeddings.weight", config.max_positions, h);
  w.token_type_embeddings = r.matrix("embeddings.token_type_embeddings.weight", config.type_vocab_size, h);
  w.embedding_ln = r.layer_norm("embeddings.LayerNorm", h);
  w.layers.reserve(config.num_layers);
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    EncoderLayerWeights lw;
    lw.query_w = r.matrix(p + "attention.self.query.weight", h, h);
    lw.query_b = r.vec(p + "attention.self.query.bias", h);
    lw.key_w = r.matrix(p + "attention.self.key.weight", h, h);
    lw.key_b = r.vec(p + "attention.self.key.bias", h);
    lw.value_w = r.matrix(p + "attention.self.value.weight", h, h);
    lw.value_b = r.vec(p + "attention.self.value.bias", h);
    lw.attn_out_w = r.matrix(p + "attention.output.dense.weight", h, h);
    lw.attn_out_b = r.vec(p + "attention.output.dense.bias", h);
    lw.attn_ln = r.layer_norm(p + "attention.output.LayerNorm", h);
    lw.ffn_in_w = r.matrix(p + "intermediate.dense.weight", inter, h);
    lw.ffn_in_b = r.vec(p + "intermediate.dense.bias", inter);
    lw.ffn_out_w = r.matrix(p + "output.dense.weight", h, inter);
    lw.ffn_out_b = r.vec(p + "output.dense.bias", h);
    lw.ffn_ln = r.layer_norm(p + "output.LayerNorm", h);
    w.layers.push_back(std::move(lw));
  }
  return w;
}

std::vector<NamedTensor> named_tensors(const ModelWeights& w) {
  std::vector<NamedTensor> out;
  auto mat = [&](std::string name, const Matrix& m) {
    out.push_back({std::move(name), {m.rows(), m.cols()}, m.data()});
  };
  auto vec = [&](std::string name, const std::vector<float>& v) {
    out.push_back({std::move(name), {v.size()}, v});
  };
  auto ln = [&](const std::string& base, const LayerNormParams& p) {
    vec(base + ".weight", p.gamma);
    vec(base + ".bias", p.beta);
  };
  mat("embeddings.word_embeddings.weight", w.word_embeddings);
  mat("embeddings.position_embeddings.weight", w.position_embeddings);
  mat("embeddings.token_type_embeddings.weight", w.token_type_embeddings);
  ln("embeddings.LayerNorm", w.embedding_ln);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& lw = w.layers[l];
    const std::string p = layer_prefix(static_cast<int>(l));
    mat(p + "attention.self.query.weight", lw.query_w);
    vec(p + "attention.self.query.bias", lw.query_b);
    mat(p + "attention.self.key.weight", lw.key_w);
    vec(p + "attention.self.key.bias", lw.key_b);
    mat(p + "attention.self.value.weight", lw.value_w);
    vec(p + "attention.self.value.bias", lw.value_b);
    mat(p + "attention.output.dense.weight", lw.attn_out_w);
    vec(p + "attention.output.dense.bias", lw.attn_out_b);
    ln(p + "attention.output.LayerNorm", lw.attn_ln);
    mat(p + "intermediate.dense.weight", lw.ffn_in_w);
    vec(p + "intermediate.dense.bias", lw.ffn_in_b);
    mat(p + "output.dense.weight", lw.ffn_out_w);
    vec(p + "output.dense.bias", lw.ffn_out_b);
    ln(p + "output.LayerNorm", lw.ffn_ln);
  }
  return out;
}

Model load_model(const std::filesystem::path& dir) {
  for (const char* name : {"config.json", "model.safetensors", "vocab.txt", "manifest.json"}) {
    if (!std::filesystem::is_regular_file(dir / name)) {
      throw LoadError("model directory " + dir.string() + " is missing " + name);
    }
  }
  Model m;
  m.dir = dir;
  m.config = load_config(dir / "config.json");

  json manifest;
  try {
    manifest = json::parse(read_text_file(dir / "manifest.json"));
    m.manifest.source_checkpoint = manifest.value("source_checkpoint", std::string());
    if (manifest.contains("files")) {
      for (const auto& [name, entry] : manifest.at("files").items()) {
        m.manifest.file_sha256[name] = entry.at("sha256").get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw LoadError("manifest.json: " + std::string(e.what()));
  }
  m.manifest.raw = manifest;
  if (!m.manifest.file_sha256.count("model.safetensors")) {
    throw LoadError("manifest.json does not record a checksum for model.safetensors");
  }
  for (const auto& [name, expected] : m.manifest.file_sha256) {
    const std::string actual = sha256_file(dir / name);
    if (actual != expected) {
      throw LoadError("checksum mismatch for " + name + ": manifest records " + expected +
                      ", file hashes to " + actual);
    }
    if (name == "model.safetensors") m.weights_sha256 = actual;
  }

  const SafetensorsFile file = SafetensorsFile::read(dir / "model.safetensors");
  m.weights = load_weights(file, m.config);
  m.vocab = Vocab::load(dir / "vocab.txt");
  if (m.vocab.size() != static_cast<std::size_t>(m.config.vocab_size)) {
    throw LoadError("vocab.txt has " + std::to_string(m.vocab.size()) + " tokens but config vocab_size is " +
                    std::to_string(m.config.vocab_size));
  }
  return m;
}

void save_model(const std::filesystem::path& dir, const ModelConfig& config, const ModelWeights& weights,
                const std::vector<std::string>& vocab_tokens, const std::string& source_checkpoint) {
  std::filesystem::create_directories(dir);
  const auto tensors = named_tensors(weights);
  write_safetensors(dir / "model.safetensors", tensors);
  write_file_atomic(dir / "config.json", config.to_json().dump(2) + "\n");
  std::string vocab;
  for (const auto& t : vocab_tokens) vocab += t + "\n";
  write_file_atomic(dir / "vocab.txt", vocab);
  json manifest = {{"source_checkpoint", source_checkpoint}, {"files", json::object()}, {"tensors", json::array()}};
  for (const char* name : {"config.json", "model.safetensors", "vocab.txt"}) {
    manifest["files"][name] = {{"sha256", sha256_file(dir / name)}};
  }
  for (const auto& t : tensors) manifest["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelWeights random_weights(const ModelConfig& config, std::uint64_t seed, float scale) {
  config.validate();
  Rng rng(seed);
  auto fill = [&](std::size_t r, std::size_t c, float s) {
    Matrix m(r, c);
    for (float& v : m.data()) v = static_cast<float>(rng.normal()) * s;
    return m;
  };
  auto vec = [&](std::size_t n, float base, float s) {
    std::vector<float> v(n);
    for (float& x : v) x = base + static_cast<float>(rng.normal()) * s;
    return v;
  };
  const auto h = static_cast<std::size_t>(config.hidden);
  const auto inter = static_cast<std::size_t>(config.intermediate);
  ModelWeights w;
  w.word_embeddings = fill(config.vocab_size, h, 5 * scale);
  w.position_embeddings = fill(config.max_positions, h, 5 * scale);
  w.token_type_embeddings = fill(config.type_vocab_size, h, 5 * scale);
  w.embedding_ln = {vec(h, 1.0f, scale), vec(h, 0.0f, scale)};
  for (int l = 0; l < config.num_layers; ++l) {
    EncoderLayerWeights lw;
    lw.query_w = fill(h, h, scale);
    lw.query_b = vec(h, 0.0f, scale);
    lw.key_w = fill(h, h, scale);
    lw.key_b = vec(h, 0.0f, scale);
    lw.value_w = fill(h, h, scale);
    lw.value_b = vec(h, 0.0f, scale);
    lw.attn_out_w = fill(h, h, scale);
    lw.attn_out_b = vec(h, 0.0f, scale);
    lw.attn_ln = {vec(h, 1.0f, scale), vec(h, 0.0f, scale)};
    lw.ffn_in_w = fill(inter, h, scale);
    lw.ffn_in_b = vec(inter, 0.0f, scale);
    lw.ffn_out_w = fill(h, inter, scale);
    lw.ffn_out_b = vec(h, 0.0f, scale);
    lw.ffn_ln = {vec(h, 1.0f, scale), vec(h, 0.0f, scale)};
    w.layers.push_back(std::move(lw));
  }
  return w;
}

}  // namespace ctxprobe
