#pragma once

#include <string>
#include <vector>

#include "ctxprobe/encoder.hpp"
#include "ctxprobe/rng.hpp"

namespace fixtures {

// Gaussian traces with the given dimensions.
inline ctxprobe::TraceSet random_trace(ctxprobe::Rng& rng, int layers, std::size_t hidden, std::size_t inter,
                                       const std::string& id) {
  auto noise = [&](std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
  };
  ctxprobe::TraceSet t;
  t.sentence_id = id;
  t.span = {1, 2};
  t.static_emb = noise(hidden);
  for (int l = 0; l < layers; ++l) t.layers.push_back({noise(hidden), noise(inter), noise(hidden)});
  return t;
}

inline std::vector<ctxprobe::TraceSet> random_traces(std::size_t n, int layers, std::size_t hidden, std::size_t inter,
                                                     std::uint64_t seed) {
  ctxprobe::Rng rng(seed);
  std::vector<ctxprobe::TraceSet> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_trace(rng, layers, hidden, inter, "t" + std::to_string(i)));
  return out;
}

}  // namespace fixtures
