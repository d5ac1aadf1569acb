#include "ctxprobe/trace_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "ctxprobe/error.hpp"
#include "ctxprobe/io.hpp"

namespace ctxprobe {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

std::vector<unsigned char> serialize_container(const FloatContainer& c) {
  nlohmann::json header = c.header;
  header["payload_floats"] = c.payload.size();
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  std::vector<unsigned char> out(8 + text.size() + c.payload.size() * sizeof(float));
  std::memcpy(out.data(), &len, 8);
  std::memcpy(out.data() + 8, text.data(), text.size());
  if (!c.payload.empty()) std::memcpy(out.data() + 8 + text.size(), c.payload.data(), c.payload.size() * sizeof(float));
  return out;
}

FloatContainer parse_container(std::span<const unsigned char> bytes, const std::string& origin) {
  if (bytes.size() < 8) throw ParseError(origin + ": truncated container (no header length)");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data(), 8);
  if (len > bytes.size() - 8) {
    throw ParseError(origin + ": header length " + std::to_string(len) + " exceeds file size " +
                     std::to_string(bytes.size()));
  }
  FloatContainer c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(origin + ": malformed header: " + e.what());
  }
  if (!c.header.is_object()) throw ParseError(origin + ": header is not a JSON object");
  const std::size_t available = bytes.size() - 8 - static_cast<std::size_t>(len);
  // Without payload_floats the payload runs to the end of the file.
  const std::uint64_t floats = c.header.contains("payload_floats") ? c.header.at("payload_floats").get<std::uint64_t>()
                                                                    : available / sizeof(float);
  if (available != floats * sizeof(float)) {
    throw ShapeError(origin + ": header declares " + std::to_string(floats) + " floats but payload has " +
                     std::to_string(available) + " bytes");
  }
  c.payload.resize(floats);
  if (floats) std::memcpy(c.payload.data(), bytes.data() + 8 + len, available);
  return c;
}

FloatContainer read_container(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  return parse_container(bytes, path.string());
}

void write_container(const std::filesystem::path& path, const FloatContainer& c) {
  write_file_atomic(path, serialize_container(c));
}

void TraceStore::validate() const {
  if (num_layers <= 0 || hidden == 0 || intermediate == 0) {
    throw ValidationError("trace store: invalid dimensions");
  }
  std::vector<bool> used(traces.size(), false);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!e.record) {
      if (!e.skip_reason) throw ValidationError("trace store: entry " + std::to_string(i) + " has neither a record nor a skip reason");
      continue;
    }
    if (*e.record >= traces.size() || used[*e.record]) {
      throw ValidationError("trace store: entry " + std::to_string(i) + " references an invalid record");
    }
    used[*e.record] = true;
  }
  if (std::find(used.begin(), used.end(), false) != used.end()) {
    throw ValidationError("trace store: record not referenced by any entry");
  }
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const auto& t = traces[r];
    bool ok = t.static_emb.size() == hidden && t.layers.size() == static_cast<std::size_t>(num_layers);
    for (const auto& l : t.layers) {
      ok = ok && l.sa.size() == hidden && l.acts.size() == intermediate && l.out.size() == hidden;
    }
    if (!ok) throw CoverageError("trace store: record " + std::to_string(r) + " (" + t.sentence_id + ") is incomplete");
  }
}

const TraceSet& TraceStore::trace_of(std::size_t entry) const {
  const auto& e = entries.at(entry);
  if (!e.record) {
    throw CoverageError("no trace for sample " + std::to_string(entry) + " (" + e.sentence_id +
                        "): " + e.skip_reason.value_or("skipped"));
  }
  return traces.at(*e.record);
}

std::vector<SenseSample> TraceStore::samples() const {
  std::vector<SenseSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.sample);
  return out;
}

FloatContainer TraceStore::to_container() const {
  validate();
  FloatContainer c;
  nlohmann::json samples_json = nlohmann::json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    nlohmann::json s = e.sample.to_json();
    s["index"] = i;
    s["sentence_id"] = e.sentence_id;
    if (e.record) {
      const auto& t = traces[*e.record];
      s["record"] = *e.record;
      s["span"] = {t.span.begin, t.span.end};
      s["skipped"] = nullptr;
    } else {
      s["record"] = nullptr;
      s["span"] = nullptr;
      s["skipped"] = *e.skip_reason;
    }
    samples_json.push_back(std::move(s));
  }
  c.header = {{"format", kFormat},
              {"version", kVersion},
              {"model_checksum", model_checksum},
              {"capture_policy", policy.to_json()},
              {"dataset_id", dataset_id},
              {"num_layers", num_layers},
              {"hidden", hidden},
              {"intermediate", intermediate},
              {"record_floats", record_floats()},
              {"num_records", traces.size()},
              {"record_layout", "static[hidden], then per layer sa[hidden] acts[intermediate] out[hidden]"},
              {"samples", samples_json},
              {"num_skipped", skipped()},
              {"manifest", manifest}};
  c.payload.reserve(traces.size() * record_floats());
  for (const auto& t : traces) {
    c.payload.insert(c.payload.end(), t.static_emb.begin(), t.static_emb.end());
    for (const auto& l : t.layers) {
      c.payload.insert(c.payload.end(), l.sa.begin(), l.sa.end());
      c.payload.insert(c.payload.end(), l.acts.begin(), l.acts.end());
      c.payload.insert(c.payload.end(), l.out.begin(), l.out.end());
    }
  }
  return c;
}

TraceStore TraceStore::from_container(const FloatContainer& c) {
  const auto& h = c.header;
  if (h.value("format", "") != kFormat) throw ParseError("not a trace store (format is not " + std::string(kFormat) + ")");
  if (h.value("version", 0) != kVersion) {
    throw ParseError("unsupported trace store version " + h.value("version", nlohmann::json()).dump());
  }
  TraceStore s;
  try {
    s.model_checksum = h.at("model_checksum").get<std::string>();
    s.policy = CapturePolicy::from_json(h.at("capture_policy"));
    s.dataset_id = h.at("dataset_id").get<std::string>();
    s.num_layers = h.at("num_layers").get<int>();
    s.hidden = h.at("hidden").get<std::size_t>();
    s.intermediate = h.at("intermediate").get<std::size_t>();
    s.manifest = h.value("manifest", nlohmann::json::object());
    const auto records = h.at("num_records").get<std::size_t>();
    if (records * s.record_floats() != c.payload.size()) {
      throw ShapeError("trace store: " + std::to_string(records) + " records of " + std::to_string(s.record_floats()) +
                       " floats do not match a payload of " + std::to_string(c.payload.size()) + " floats");
    }
    s.traces.resize(records);
    for (const auto& sj : h.at("samples")) {
      StoreEntry e;
      e.sample = SenseSample::from_json(sj);
      e.sentence_id = sj.at("sentence_id").get<std::string>();
      if (!sj.at("record").is_null()) {
        e.record = sj.at("record").get<std::size_t>();
        if (*e.record >= records) throw ValidationError("trace store: record index out of range");
        auto& t = s.traces[*e.record];
        t.sentence_id = e.sentence_id;
        t.span = {sj.at("span").at(0).get<std::size_t>(), sj.at("span").at(1).get<std::size_t>()};
      } else {
        e.skip_reason = sj.at("skipped").get<std::string>();
      }
      s.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trace store: malformed header: ") + e.what());
  }
  const std::size_t h_dim = s.hidden, i_dim = s.intermediate;
  const float* p = c.payload.data();
  for (auto& t : s.traces) {
    t.policy = s.policy;
    t.static_emb.assign(p, p + h_dim);
    p += h_dim;
    t.layers.resize(static_cast<std::size_t>(s.num_layers));
    for (auto& l : t.layers) {
      l.sa.assign(p, p + h_dim);
      p += h_dim;
      l.acts.assign(p, p + i_dim);
      p += i_dim;
      l.out.assign(p, p + h_dim);
      p += h_dim;
    }
  }
  s.validate();
  return s;
}

void TraceStore::write(const std::filesystem::path& path) const { write_container(path, to_container()); }

TraceStore TraceStore::read(const std::filesystem::path& path) { return from_container(read_container(path)); }

}  // namespace ctxprobe
