#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>
#include <unistd.h>

#include "ctxprobe/encoder.hpp"
#include "ctxprobe/io.hpp"
#include "ctxprobe/probes.hpp"
#include "ctxprobe/rng.hpp"
#include "ctxprobe/tensor.hpp"
#include "ctxprobe/trace_store.hpp"

namespace fixtures {

inline std::filesystem::path data_dir() { return CTXPROBE_TEST_DATA; }
inline std::filesystem::path model_dir() { return data_dir() / "tiny_bert"; }

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ctxprobe_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ctxprobe::Matrix random_matrix(std::size_t rows, std::size_t cols, ctxprobe::Rng& rng, double scale = 1.0) {
  ctxprobe::Matrix m(rows, cols);
  for (auto& v : m.data()) v = static_cast<float>(scale * rng.normal());
  return m;
}

struct TokenizerCase {
  int id = 0;
  std::string text;
  std::vector<int> ids;
  std::vector<std::string> pieces;
  std::vector<int> word_ids;
};

inline std::vector<TokenizerCase> load_tokenizer_corpus() {
  std::ifstream in(data_dir() / "golden" / "tokenizer_corpus.jsonl");
  std::vector<TokenizerCase> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("id").get<int>(), j.at("text").get<std::string>(), j.at("ids").get<std::vector<int>>(),
                   j.at("pieces").get<std::vector<std::string>>(), j.at("word_ids").get<std::vector<int>>()});
  }
  return out;
}

// Word index of every piece, -1 for [CLS] / [SEP].
inline std::vector<int> word_ids_of(const ctxprobe::Tokenization& tok) {
  std::vector<int> ids(tok.piece_ids.size(), -1);
  for (std::size_t w = 0; w < tok.word_spans.size(); ++w)
    for (std::size_t p = tok.word_spans[w].begin; p < tok.word_spans[w].end; ++p) ids[p] = static_cast<int>(w);
  return ids;
}

struct GoldenSentence {
  std::string text;
  std::vector<int> ids;
  std::map<std::string, ctxprobe::Matrix> tensors;
};

struct Goldens {
  nlohmann::json header;
  std::vector<GoldenSentence> sentences;
};

// Reference activations dumped from the PyTorch implementation.
inline Goldens load_goldens() {
  const auto c = ctxprobe::read_container(data_dir() / "golden" / "encoder_golden.bin");
  Goldens g;
  g.header = c.header;
  for (const auto& s : c.header.at("sentences")) {
    GoldenSentence gs;
    gs.text = s.at("text").get<std::string>();
    gs.ids = s.at("ids").get<std::vector<int>>();
    for (const auto& [name, t] : s.at("tensors").items()) {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto offset = t.at("offset").get<std::size_t>();
      std::vector<float> values(c.payload.begin() + static_cast<std::ptrdiff_t>(offset),
                                c.payload.begin() + static_cast<std::ptrdiff_t>(offset + shape[0] * shape[1]));
      gs.tensors.emplace(name, ctxprobe::Matrix(shape[0], shape[1], std::move(values)));
    }
    g.sentences.push_back(std::move(gs));
  }
  return g;
}

// k Gaussian classes with unit isotropic noise. Class means are
// delta/sqrt(2) times independent random unit directions, so every pair of
// means is about delta apart and the signal is spread over all coordinates.
inline ctxprobe::ProbeDataset gaussian_blobs(int k, std::size_t d, int per_class, double delta, std::uint64_t seed) {
  ctxprobe::Rng rng(seed);
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(k), std::vector<double>(d));
  for (auto& c : centers) {
    double n2 = 0.0;
    for (auto& x : c) {
      x = rng.normal();
      n2 += x * x;
    }
    for (auto& x : c) x *= delta / std::sqrt(2.0) / std::sqrt(n2);
  }
  ctxprobe::ProbeDataset ds;
  ds.features = ctxprobe::Matrix(static_cast<std::size_t>(k * per_class), d);
  for (int c = 0; c < k; ++c) ds.label_names.push_back("class" + std::to_string(c));
  for (int i = 0; i < k * per_class; ++i) {
    const int c = i % k;
    ds.labels.push_back(c);
    auto row = ds.features.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<float>(rng.normal() + centers[static_cast<std::size_t>(c)][j]);
  }
  return ds;
}

struct PlantedGrid {
  std::vector<ctxprobe::TraceSet> traces;
  std::vector<std::string> labels;
};

// Traces whose features are pure noise except at (planted_layer,
// planted_sublayer), where each class gets its own mean offset.
inline PlantedGrid planted_grid(int classes, int per_class, std::size_t hidden, std::size_t intermediate, int layers,
                                int planted_layer, ctxprobe::Sublayer planted_sublayer, double delta,
                                std::uint64_t seed) {
  ctxprobe::Rng rng(seed);
  const std::size_t planted_dim = planted_sublayer == ctxprobe::Sublayer::kActs ? intermediate : hidden;
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(classes), std::vector<double>(planted_dim));
  for (auto& c : centers) {
    double n2 = 0.0;
    for (auto& x : c) {
      x = rng.normal();
      n2 += x * x;
    }
    for (auto& x : c) x *= delta / std::sqrt(2.0) / std::sqrt(n2);
  }
  auto noise = [&](std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
  };
  PlantedGrid g;
  for (int i = 0; i < classes * per_class; ++i) {
    const int c = i % classes;
    ctxprobe::TraceSet t;
    t.sentence_id = "p" + std::to_string(i);
    t.span = {1, 2};
    t.static_emb = noise(hidden);
    for (int l = 1; l <= layers; ++l) {
      ctxprobe::LayerTrace lt{noise(hidden), noise(intermediate), noise(hidden)};
      if (l == planted_layer) {
        auto& v = planted_sublayer == ctxprobe::Sublayer::kSA     ? lt.sa
                  : planted_sublayer == ctxprobe::Sublayer::kActs ? lt.acts
                                                                  : lt.out;
        for (std::size_t j = 0; j < v.size(); ++j) v[j] += static_cast<float>(centers[static_cast<std::size_t>(c)][j]);
      }
      t.layers.push_back(std::move(lt));
    }
    g.traces.push_back(std::move(t));
    g.labels.push_back("kw" + std::to_string(c / 2) + "::sense" + std::to_string(c % 2));
  }
  return g;
}

}  // namespace fixtures
