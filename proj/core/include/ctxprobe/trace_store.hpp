#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/datasets.hpp"
#include "ctxprobe/encoder.hpp"

namespace ctxprobe {

// Framing shared by trace stores and golden dumps:
//   u64 LE header length | UTF-8 JSON header | f32 LE payload
// Writers always declare "payload_floats" in the header.
struct FloatContainer {
  nlohmann::json header;
  std::vector<float> payload;
};

std::vector<unsigned char> serialize_container(const FloatContainer& c);
FloatContainer parse_container(std::span<const unsigned char> bytes, const std::string& origin = "<memory>");
FloatContainer read_container(const std::filesystem::path& path);
void write_container(const std::filesystem::path& path, const FloatContainer& c);

struct StoreEntry {
  SenseSample sample;
  std::string sentence_id;
  std::optional<std::size_t> record;       // index into TraceStore::traces
  std::optional<std::string> skip_reason;  // set when record is absent
};

// Keyword traces of a whole dataset. Each record is packed as
//   static[hidden], then per layer: sa[hidden], acts[intermediate], out[hidden]
struct TraceStore {
  static constexpr const char* kFormat = "ctxprobe.tracestore";
  static constexpr int kVersion = 1;

  std::string model_checksum;
  CapturePolicy policy;
  std::string dataset_id;
  int num_layers = 0;
  std::size_t hidden = 0;
  std::size_t intermediate = 0;
  std::vector<StoreEntry> entries;  // every dataset sample, in dataset order
  std::vector<TraceSet> traces;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t record_floats() const noexcept {
    return hidden + static_cast<std::size_t>(num_layers) * (2 * hidden + intermediate);
  }
  std::size_t skipped() const noexcept { return entries.size() - traces.size(); }

  // Checks record references and that every trace is complete. Throws
  // CoverageError / ValidationError.
  void validate() const;

  // Trace of entry i, or CoverageError if it was skipped.
  const TraceSet& trace_of(std::size_t entry) const;

  std::vector<SenseSample> samples() const;

  FloatContainer to_container() const;
  static TraceStore from_container(const FloatContainer& c);

  void write(const std::filesystem::path& path) const;
  static TraceStore read(const std::filesystem::path& path);
};

}  // namespace ctxprobe
