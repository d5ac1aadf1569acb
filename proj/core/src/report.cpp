#include "ctxprobe/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <map>
#include <set>
#include <sstream>

#include "ctxprobe/checksum.hpp"
#include "ctxprobe/datasets.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/io.hpp"
#include "ctxprobe/model.hpp"
#include "ctxprobe/tokenizer.hpp"

#ifndef CTXPROBE_VERSION_STRING
#define CTXPROBE_VERSION_STRING "0.0.0"
#endif

namespace ctxprobe {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view tool_version() { return CTXPROBE_VERSION_STRING; }

json RunManifest::to_json() const {
  json in = json::array();
  for (const auto& r : inputs) in.push_back({{"role", r.role}, {"path", r.path}, {"sha256", r.sha256}});
  return {{"tool", tool},   {"version", version}, {"command", command},   {"flags", flags},
          {"seeds", seeds}, {"inputs", in},       {"timestamp", timestamp}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.tool = j.at("tool").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.flags = j.at("flags");
    m.seeds = j.at("seeds");
    for (const auto& r : j.at("inputs")) {
      m.inputs.push_back({r.at("role").get<std::string>(), r.at("path").get<std::string>(),
                          r.at("sha256").get<std::string>()});
    }
    m.timestamp = j.at("timestamp").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

std::string current_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    char* end = nullptr;
    const long long v = std::strtoll(sde, &end, 10);
    if (*end != '\0' || v < 0) throw ConfigError("SOURCE_DATE_EPOCH must be a non-negative integer");
    t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string_view to_string(OutputFormat f) { return f == OutputFormat::kCsv ? "csv" : "json"; }

OutputFormat parse_output_format(std::string_view s) {
  if (s == "csv") return OutputFormat::kCsv;
  if (s == "json") return OutputFormat::kJson;
  throw ConfigError("unknown output format '" + std::string(s) + "' (expected csv or json)");
}

json CommandOptions::to_json() const {
  return {{"command", command},
          {"model_dir", model_dir},
          {"dataset", dataset},
          {"dataset_id", dataset_id},
          {"store", store},
          {"inputs", inputs},
          {"secoda", secoda},
          {"out", out},
          {"markdown", markdown},
          {"capture_policy", policy.to_json()},
          {"seed", seed},
          {"format", std::string(ctxprobe::to_string(format))},
          {"threads", threads},
          {"probe_kind", std::string(ctxprobe::to_string(probe_kind))},
          {"probe", probe.to_json()},
          {"max_len", max_len},
          {"skip_incomplete_pairs", skip_incomplete_pairs}};
}

CommandOptions CommandOptions::from_json(const json& j) {
  CommandOptions o;
  try {
    o.command = j.at("command").get<std::string>();
    o.model_dir = j.at("model_dir").get<std::string>();
    o.dataset = j.at("dataset").get<std::string>();
    o.dataset_id = j.at("dataset_id").get<std::string>();
    o.store = j.at("store").get<std::string>();
    o.inputs = j.at("inputs").get<std::vector<std::string>>();
    o.secoda = j.at("secoda").get<std::string>();
    o.out = j.at("out").get<std::string>();
    o.markdown = j.at("markdown").get<std::string>();
    o.policy = CapturePolicy::from_json(j.at("capture_policy"));
    o.seed = j.at("seed").get<std::uint64_t>();
    o.format = parse_output_format(j.at("format").get<std::string>());
    o.threads = j.at("threads").get<unsigned>();
    o.probe_kind = parse_probe_kind(j.at("probe_kind").get<std::string>());
    o.probe = ProbeParams::from_json(j.at("probe"));
    o.max_len = j.at("max_len").get<std::size_t>();
    o.skip_incomplete_pairs = j.at("skip_incomplete_pairs").get<bool>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest flags: ") + e.what());
  }
  return o;
}

namespace {

constexpr const char* kModelFiles[] = {"config.json", "model.safetensors", "vocab.txt", "manifest.json"};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void require(const std::string& value, const char* flag, const std::string& command) {
  if (value.empty()) throw ConfigError(command + ": " + flag + " is required");
}

std::vector<InputRecord> collect_inputs(const CommandOptions& o) {
  std::vector<InputRecord> in;
  auto add = [&](const std::string& role, const std::string& path) {
    if (!fs::exists(path)) throw NotFoundError(o.command + ": input not found: " + path);
    in.push_back({role, path, sha256_file(path)});
  };
  const std::string& c = o.command;
  if (c == "extract") {
    require(o.model_dir, "--model-dir (or CTXPROBE_MODEL_DIR)", c);
    require(o.dataset, "--dataset", c);
    for (const char* f : kModelFiles) add(std::string("model/") + f, (fs::path(o.model_dir) / f).string());
    add("dataset", o.dataset);
  } else if (c == "similarity" || c == "pca" || c == "probe") {
    require(o.store, "--store", c);
    add("store", o.store);
  } else if (c == "report") {
    if (o.inputs.empty()) throw ConfigError("report: at least one --input is required");
    for (std::size_t i = 0; i < o.inputs.size(); ++i) add("input[" + std::to_string(i) + "]", o.inputs[i]);
  } else if (c == "stats" || c == "subset-spwc") {
    require(o.dataset, "--dataset", c);
    add("dataset", o.dataset);
  } else if (c == "build-pwc") {
    if (o.inputs.empty()) throw ConfigError("build-pwc: at least one --cwi file is required");
    require(o.secoda, "--secoda", c);
    for (std::size_t i = 0; i < o.inputs.size(); ++i) add("cwi[" + std::to_string(i) + "]", o.inputs[i]);
    add("secoda", o.secoda);
  } else {
    throw ConfigError("unknown command '" + c + "'");
  }
  return in;
}

void verify_inputs(const RunManifest& recorded, const std::vector<InputRecord>& now) {
  if (recorded.inputs.size() != now.size()) {
    throw ProvenanceError("rerun: manifest records " + std::to_string(recorded.inputs.size()) + " inputs, found " +
                          std::to_string(now.size()));
  }
  for (std::size_t i = 0; i < now.size(); ++i) {
    const auto& r = recorded.inputs[i];
    if (r.role != now[i].role || r.sha256 != now[i].sha256) {
      throw ProvenanceError("rerun: input '" + r.role + "' (" + r.path + ") no longer matches its recorded checksum");
    }
  }
}

std::string dataset_id_of(const CommandOptions& o) {
  if (!o.dataset_id.empty()) return o.dataset_id;
  return fs::path(o.dataset).stem().string();
}

std::string csv_preamble(const std::string& schema, const json& manifest) {
  return "# schema=" + schema + "\n# manifest=" + manifest.dump() + "\n";
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

json artifact_base(const std::string& schema, const json& manifest, const TraceStore& store) {
  return {{"schema", schema},
          {"manifest", manifest},
          {"dataset_id", store.dataset_id},
          {"model_checksum", store.model_checksum},
          {"capture_policy", store.policy.to_json()}};
}

void write_sidecar(const fs::path& out, const json& manifest) {
  write_file_atomic(fs::path(out.string() + ".manifest.json"),
                    json_text({{"schema", "ctxprobe.manifest/1"}, {"manifest", manifest}}));
}

CommandResult cmd_extract(const CommandOptions& o, const json& manifest) {
  require(o.out, "--out", o.command);
  const Model model = load_model(o.model_dir);
  const auto samples = load_dataset(o.dataset);
  if (samples.empty()) throw ValidationError("extract: empty dataset " + o.dataset + "; no store written");

  CommandResult res;
  TraceStore store;
  store.model_checksum = model.weights_sha256;
  store.policy = o.policy;
  store.dataset_id = dataset_id_of(o);
  store.num_layers = model.config.num_layers;
  store.hidden = static_cast<std::size_t>(model.config.hidden);
  store.intermediate = static_cast<std::size_t>(model.config.intermediate);
  store.manifest = manifest;

  std::vector<EncodeRequest> requests;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    StoreEntry e;
    e.sample = samples[i];
    e.sentence_id = "s" + std::to_string(i);
    Tokenization tok = tokenize(samples[i].sentence, model.vocab, o.max_len);
    try {
      const PieceSpan span = locate_keyword(tok, samples[i].keyword, samples[i].keyword_occurrence);
      e.record = requests.size();
      requests.push_back({std::move(tok), span, e.sentence_id});
    } catch (const NotFoundError& err) {
      e.skip_reason = std::string(err.what()) + (tok.truncated ? " (sentence truncated)" : "");
      res.warnings.push_back("skipped sample " + std::to_string(i) + ": " + *e.skip_reason);
    }
    store.entries.push_back(std::move(e));
  }
  const Encoder encoder(model.config, model.weights);
  store.traces = encode_batch(encoder, requests, o.policy, o.threads);
  store.write(o.out);
  write_sidecar(o.out, manifest);
  res.outputs = {o.out, o.out + ".manifest.json"};
  res.summary = "extract: " + std::to_string(samples.size()) + " samples, " + std::to_string(store.traces.size()) +
                " traces, " + std::to_string(store.skipped()) + " skipped -> " + o.out;
  return res;
}

void write_output(const CommandOptions& o, const std::string& schema, const json& body, const std::string& csv_rows,
                  CommandResult& res) {
  require(o.out, "--out", o.command);
  if (o.format == OutputFormat::kJson) {
    write_file_atomic(o.out, json_text(body));
  } else {
    write_file_atomic(o.out, csv_preamble(schema, body.at("manifest")) + csv_rows);
  }
  res.outputs.push_back(o.out);
}

CommandResult cmd_similarity(const CommandOptions& o, const json& manifest) {
  const TraceStore store = TraceStore::read(o.store);
  PairSelection sel = select_pairs(store, o.skip_incomplete_pairs);
  const CurveSet curves = average_curves(sel.traces, sel.pairs);
  json body = artifact_base("ctxprobe.similarity/1", manifest, store);
  body.update(similarity_json(curves));
  body["warnings"] = sel.warnings;
  CommandResult res;
  res.warnings = sel.warnings;
  write_output(o, "ctxprobe.similarity/1", body, similarity_csv_rows(curves), res);
  res.summary = "similarity: " + std::to_string(curves.pairs) + " pairs, " + std::to_string(curves.samples) +
                " samples -> " + o.out;
  return res;
}

CommandResult cmd_pca(const CommandOptions& o, const json& manifest) {
  const TraceStore store = TraceStore::read(o.store);
  PairSelection sel = select_pairs(store, o.skip_incomplete_pairs);
  const ContextualizationSummary sum = summarize(sel.traces, sel.pairs);
  json body = artifact_base("ctxprobe.pca/1", manifest, store);
  body.update(summary_json(sum));
  body["warnings"] = sel.warnings;
  CommandResult res;
  res.warnings = sel.warnings;
  write_output(o, "ctxprobe.pca/1", body, summary_csv_rows(sum), res);
  res.summary = "pca: " + std::to_string(sum.curves.pairs) + " pairs -> " + o.out;
  return res;
}

CommandResult cmd_probe(const CommandOptions& o, const json& manifest) {
  const TraceStore store = TraceStore::read(o.store);
  std::vector<std::string> labels(store.traces.size());
  for (const auto& e : store.entries) {
    if (e.record) labels[*e.record] = namespaced_label(e.sample);
  }
  const ProbeGridResult grid =
      probe_grid(store.traces, labels, o.probe_kind, o.seed, o.probe, store.dataset_id, o.threads, store.num_layers);
  json body = artifact_base("ctxprobe.probe/1", manifest, store);
  body.update(grid.to_json());
  CommandResult res;
  res.warnings = grid.warnings;
  write_output(o, "ctxprobe.probe/1", body, probe_csv_rows(grid), res);
  const auto [layer, sub] = grid.best_cell();
  res.summary = "probe " + std::string(to_string(grid.kind)) + ": " + std::to_string(grid.num_classes) +
                " classes, best cell layer " + std::to_string(layer) + " " + std::string(to_string(sub)) + " (" +
                fmt(grid.accuracy[static_cast<std::size_t>(layer - 1)][static_cast<std::size_t>(sub)]) + ") -> " +
                o.out;
  return res;
}

CommandResult cmd_report(const CommandOptions& o, const json& manifest) {
  require(o.out, "--out", o.command);
  std::vector<ReportInput> inputs;
  for (const auto& path : o.inputs) {
    const std::string text = read_text_file(path);
    json artifact;
    try {
      artifact = json::parse(text);
    } catch (const json::exception&) {
      throw ValidationError("report: " + path + " is not a JSON artifact (re-run the command with --format json)");
    }
    inputs.push_back({path, sha256_hex(text), std::move(artifact)});
  }
  json report = combine_report(inputs);
  report["manifest"] = manifest;
  const std::string md_path = o.markdown.empty() ? fs::path(o.out).replace_extension(".md").string() : o.markdown;
  write_file_atomic(o.out, json_text(report));
  write_file_atomic(md_path, "<!-- manifest: " + manifest.dump() + " -->\n" + render_markdown(report));
  CommandResult res;
  res.outputs = {o.out, md_path};
  res.summary = "report: " + std::to_string(inputs.size()) + " artifacts -> " + o.out + ", " + md_path;
  return res;
}

bool one_sample_per_sense(std::span<const SenseSample> samples) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& s : samples) {
    if (!seen.emplace(s.keyword, s.sense_label).second) return false;
  }
  return true;
}

CommandResult cmd_stats(const CommandOptions& o, const json& manifest) {
  const auto samples = load_dataset(o.dataset);
  const DatasetStats st = stats(samples);
  bool multi = true;
  for (const auto& [senses, count] : st.senses_per_keyword) multi = multi && senses >= 2;
  json body = {{"schema", "ctxprobe.stats/1"},
               {"manifest", manifest},
               {"dataset_id", dataset_id_of(o)},
               {"stats", st.to_json()},
               {"structure",
                {{"one_sample_per_sense", one_sample_per_sense(samples)}, {"every_keyword_multi_sense", multi}}}};
  std::string rows = "field,key,value\n";
  rows += "total_samples,," + std::to_string(st.total_samples) + "\n";
  rows += "unique_keywords,," + std::to_string(st.unique_keywords) + "\n";
  for (const auto& [k, v] : st.senses_per_keyword) rows += "senses_per_keyword," + std::to_string(k) + "," + std::to_string(v) + "\n";
  for (const auto& [k, v] : st.samples_per_sense) rows += "samples_per_sense," + std::to_string(k) + "," + std::to_string(v) + "\n";
  CommandResult res;
  write_output(o, "ctxprobe.stats/1", body, rows, res);
  res.summary = "stats: " + std::to_string(st.total_samples) + " samples, " + std::to_string(st.unique_keywords) +
                " unique keywords";
  return res;
}

CommandResult cmd_build_pwc(const CommandOptions& o, const json& manifest) {
  require(o.out, "--out", o.command);
  std::vector<fs::path> cwi(o.inputs.begin(), o.inputs.end());
  const PwcBuild built = build_pwc(cwi, o.secoda);
  write_jsonl(o.out, built.samples);
  write_sidecar(o.out, manifest);
  const std::string report_path = o.out + ".join_report.json";
  write_file_atomic(report_path, json_text({{"schema", "ctxprobe.join_report/1"},
                                            {"manifest", manifest},
                                            {"report", built.report.to_json()}}));
  CommandResult res;
  res.outputs = {o.out, o.out + ".manifest.json", report_path};
  res.summary = "build-pwc: " + std::to_string(built.samples.size()) + " samples, " +
                std::to_string(built.report.kept_keywords) + " keywords -> " + o.out;
  return res;
}

CommandResult cmd_subset_spwc(const CommandOptions& o, const json& manifest) {
  require(o.out, "--out", o.command);
  const auto pwc = load_dataset(o.dataset);
  const auto subset = subset_spwc(pwc, o.seed);
  write_jsonl(o.out, subset);
  write_sidecar(o.out, manifest);
  CommandResult res;
  res.outputs = {o.out, o.out + ".manifest.json"};
  res.summary = "subset-spwc: " + std::to_string(subset.size()) + " samples -> " + o.out;
  return res;
}

}  // namespace

CommandResult run_command(const CommandOptions& options, const std::optional<RunManifest>& replay) {
  const auto inputs = collect_inputs(options);
  RunManifest m;
  if (replay) {
    verify_inputs(*replay, inputs);
    m = *replay;
  } else {
    m.version = std::string(tool_version());
    m.command = options.command;
    m.flags = options.to_json();
    m.seeds = {{"seed", options.seed}};
    m.inputs = inputs;
    m.timestamp = current_timestamp();
  }
  const json manifest = m.to_json();
  const std::string& c = options.command;
  if (c == "extract") return cmd_extract(options, manifest);
  if (c == "similarity") return cmd_similarity(options, manifest);
  if (c == "pca") return cmd_pca(options, manifest);
  if (c == "probe") return cmd_probe(options, manifest);
  if (c == "report") return cmd_report(options, manifest);
  if (c == "stats") return cmd_stats(options, manifest);
  if (c == "build-pwc") return cmd_build_pwc(options, manifest);
  return cmd_subset_spwc(options, manifest);
}

RunManifest read_manifest(const fs::path& artifact) {
  fs::path path = artifact;
  if (path.extension() == ".jsonl") path = fs::path(path.string() + ".manifest.json");
  const auto bytes = read_binary_file(path);
  const std::string origin = path.string();
  if (bytes.empty()) throw ParseError(origin + ": empty file");
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  json j;
  try {
    if (text.front() == '{') {
      j = json::parse(text);
      return RunManifest::from_json(j.contains("manifest") ? j.at("manifest") : j);
    }
    if (text.front() == '#') {
      const auto pos = text.find("\n# manifest=");
      if (pos == std::string_view::npos) throw ParseError(origin + ": CSV output has no manifest line");
      const auto start = pos + std::strlen("\n# manifest=");
      return RunManifest::from_json(json::parse(text.substr(start, text.find('\n', start) - start)));
    }
    if (text.starts_with("<!-- manifest: ")) {
      const auto start = std::strlen("<!-- manifest: ");
      return RunManifest::from_json(json::parse(text.substr(start, text.find(" -->") - start)));
    }
  } catch (const json::exception& e) {
    throw ParseError(origin + ": cannot parse embedded manifest: " + e.what());
  }
  const FloatContainer c = parse_container(bytes, origin);
  if (!c.header.contains("manifest")) throw ParseError(origin + ": container has no manifest");
  return RunManifest::from_json(c.header.at("manifest"));
}

CommandResult rerun(const fs::path& artifact, const std::string& out_override, const std::string& markdown_override) {
  const RunManifest m = read_manifest(artifact);
  if (m.tool != "ctxprobe") throw ProvenanceError("manifest was not written by ctxprobe");
  if (m.version != tool_version()) {
    throw ProvenanceError("manifest was written by ctxprobe " + m.version + ", this is " + std::string(tool_version()));
  }
  CommandOptions o = CommandOptions::from_json(m.flags);
  if (!out_override.empty()) {
    o.out = out_override;
    if (markdown_override.empty() && o.command == "report") o.markdown.clear();
  }
  if (!markdown_override.empty()) o.markdown = markdown_override;
  return run_command(o, m);
}

PairSelection select_pairs(const TraceStore& store, bool skip_incomplete) {
  PairSelection sel;
  sel.traces = store.traces;
  const auto samples = store.samples();
  std::vector<std::string> missing;
  for (const auto& p : make_pairs(samples)) {
    const auto& a = store.entries[p.a];
    const auto& b = store.entries[p.b];
    if (a.record && b.record) {
      sel.pairs.push_back({p.keyword, *a.record, *b.record});
      continue;
    }
    const std::string what = "pair for keyword '" + p.keyword + "' is missing " +
                             (a.record ? b.sentence_id : a.sentence_id) + " (skipped at extraction)";
    if (skip_incomplete) {
      sel.warnings.push_back("WARNING: dropped " + what);
    } else {
      missing.push_back(what);
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing pair members:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw CoverageError(msg + "\n(use --skip-incomplete-pairs to drop these pairs)");
  }
  return sel;
}

json similarity_json(const CurveSet& curves) {
  json sl = json::object(), we = json::object();
  for (const auto& c : curves.sublayer_sim) sl[std::string(to_string(c.sublayer))] = c.values;
  for (const auto& c : curves.we_sim) we[std::string(to_string(c.sublayer))] = c.values;
  return {{"pairs", curves.pairs},
          {"samples", curves.samples},
          {"num_layers", curves.sublayer_sim.empty() ? 0 : curves.sublayer_sim.front().values.size()},
          {"sublayer_sim", sl},
          {"we_sim", we}};
}

std::string similarity_csv_rows(const CurveSet& curves) {
  std::string out = "metric,sublayer,layer,value\n";
  for (const auto& c : curves.sublayer_sim) {
    for (std::size_t l = 0; l < c.values.size(); ++l) {
      out += "SubLayerSim," + std::string(to_string(c.sublayer)) + "," + std::to_string(l + 1) + "," + fmt(c.values[l]) + "\n";
    }
  }
  for (const auto& c : curves.we_sim) {
    for (std::size_t l = 0; l < c.values.size(); ++l) {
      out += "WESim," + std::string(to_string(c.sublayer)) + "," + std::to_string(l + 1) + "," + fmt(c.values[l]) + "\n";
    }
  }
  return out;
}

json summary_json(const ContextualizationSummary& s) {
  json j = similarity_json(s.curves);
  json l2 = json::object(), avg = json::object();
  for (Sublayer sub : kAllSublayers) {
    const auto i = static_cast<std::size_t>(sub);
    const std::string name(to_string(sub));
    l2[name] = s.pca_l2_per_layer[i];
    const auto& a = s.averages[i];
    avg[name] = {{"slsim", a.slsim}, {"wesim", a.wesim ? json(*a.wesim) : json(nullptr)}, {"pca_l2", a.pca_l2}};
  }
  j["pca_l2"] = l2;
  j["averages"] = avg;
  return j;
}

std::string summary_csv_rows(const ContextualizationSummary& s) {
  std::string out = "layer,sublayer,slsim,wesim,pca_l2\n";
  const std::size_t layers = s.pca_l2_per_layer[0].size();
  auto we_curve = [&](Sublayer sub) -> const std::vector<double>* {
    for (const auto& c : s.curves.we_sim) {
      if (c.sublayer == sub) return &c.values;
    }
    return nullptr;
  };
  for (std::size_t l = 0; l < layers; ++l) {
    for (Sublayer sub : kAllSublayers) {
      const auto i = static_cast<std::size_t>(sub);
      const auto* we = we_curve(sub);
      out += std::to_string(l + 1) + "," + std::string(to_string(sub)) + "," + fmt(s.curves.sublayer_sim[i].values[l]) +
             "," + (we ? fmt((*we)[l]) : "") + "," + fmt(s.pca_l2_per_layer[i][l]) + "\n";
    }
  }
  for (Sublayer sub : kAllSublayers) {
    const auto& a = s.averages[static_cast<std::size_t>(sub)];
    out += "all," + std::string(to_string(sub)) + "," + fmt(a.slsim) + "," + (a.wesim ? fmt(*a.wesim) : "") + "," +
           fmt(a.pca_l2) + "\n";
  }
  return out;
}

std::string probe_csv_rows(const ProbeGridResult& r) {
  std::string out = "layer,SA,Acts,Out\n";
  for (std::size_t l = 0; l < r.accuracy.size(); ++l) {
    out += std::to_string(l + 1) + "," + fmt(r.accuracy[l][0]) + "," + fmt(r.accuracy[l][1]) + "," +
           fmt(r.accuracy[l][2]) + "\n";
  }
  return out;
}

json combine_report(const std::vector<ReportInput>& inputs) {
  if (inputs.empty()) throw ValidationError("report: no inputs");
  std::set<std::string> versions, models, datasets;
  std::map<std::string, std::pair<std::string, json>> seen;  // key -> (path, manifest)
  std::map<std::string, std::size_t> by_schema;
  std::size_t pairs = 0, probe_cells = 0;
  json artifacts = json::array();
  for (const auto& in : inputs) {
    const json& a = in.artifact;
    if (!a.is_object() || !a.contains("schema") || !a.contains("manifest")) {
      throw ValidationError("report: " + in.path + " is not a ctxprobe artifact (no schema/manifest)");
    }
    const std::string schema = a.at("schema").get<std::string>();
    if (schema == "ctxprobe.report/1") throw ValidationError("report: " + in.path + " is already a report");
    const json& manifest = a.at("manifest");
    versions.insert(manifest.value("version", ""));
    const std::string model = a.value("model_checksum", "");
    if (!model.empty()) models.insert(model);
    const std::string dataset = a.value("dataset_id", "");
    datasets.insert(dataset);
    std::string key = schema + "|" + dataset + "|" + a.value("capture_policy", json::object()).dump();
    if (a.contains("kind")) key += "|" + a.at("kind").get<std::string>();
    if (auto it = seen.find(key); it != seen.end()) {
      if (it->second.second != manifest) {
        throw ProvenanceError("report: conflicting manifests for " + schema + " on dataset '" + dataset + "': " +
                              it->second.first + " and " + in.path);
      }
    } else {
      seen.emplace(key, std::make_pair(in.path, manifest));
    }
    ++by_schema[schema];
    if (schema == "ctxprobe.similarity/1" || schema == "ctxprobe.pca/1") pairs += a.at("pairs").get<std::size_t>();
    if (schema == "ctxprobe.probe/1") probe_cells += 3 * a.at("accuracy").size();
    json data = a;
    data.erase("manifest");
    artifacts.push_back({{"path", in.path},
                         {"sha256", in.sha256},
                         {"schema", schema},
                         {"dataset_id", dataset},
                         {"provenance", manifest},
                         {"data", data}});
  }
  if (versions.size() > 1) throw ProvenanceError("report: artifacts come from different tool versions");
  if (models.size() > 1) throw ProvenanceError("report: artifacts were produced with different models");
  return {{"schema", "ctxprobe.report/1"},
          {"artifacts", artifacts},
          {"totals",
           {{"artifacts", inputs.size()},
            {"by_schema", by_schema},
            {"datasets", std::vector<std::string>(datasets.begin(), datasets.end())},
            {"pairs", pairs},
            {"probe_cells", probe_cells}}}};
}

namespace {

std::string md_num(const json& v) { return v.is_null() ? "-" : fmt(v.get<double>()); }

}  // namespace

std::string render_markdown(const json& report) {
  std::ostringstream md;
  const json& totals = report.at("totals");
  md << "# ctxprobe report\n\n";
  md << "Artifacts: " << totals.at("artifacts").get<std::size_t>() << ". Datasets:";
  for (const auto& d : totals.at("datasets")) md << " " << d.get<std::string>();
  md << ".\n";
  for (const auto& art : report.at("artifacts")) {
    const json& d = art.at("data");
    const std::string schema = art.at("schema").get<std::string>();
    md << "\n## " << art.at("dataset_id").get<std::string>() << ": " << schema << "\n\n";
    md << "Source: `" << art.at("path").get<std::string>() << "`";
    if (d.contains("capture_policy")) md << ", capture policy `" << d.at("capture_policy").dump() << "`";
    md << "\n\n";
    if (schema == "ctxprobe.similarity/1" || schema == "ctxprobe.pca/1") {
      md << "| Layer | SubLayerSim SA | SubLayerSim Acts | SubLayerSim Out | WESim SA | WESim Out |\n";
      md << "|---|---|---|---|---|---|\n";
      const auto layers = d.at("num_layers").get<std::size_t>();
      for (std::size_t l = 0; l < layers; ++l) {
        md << "| " << l + 1;
        for (const char* s : {"SA", "Acts", "Out"}) md << " | " << md_num(d.at("sublayer_sim").at(s).at(l));
        for (const char* s : {"SA", "Out"}) md << " | " << md_num(d.at("we_sim").at(s).at(l));
        md << " |\n";
      }
    }
    if (schema == "ctxprobe.pca/1") {
      md << "\n| Sub-layer | Avg SLSim | Avg WESim | Avg PCA L2 |\n|---|---|---|---|\n";
      for (const char* s : {"SA", "Acts", "Out"}) {
        const json& a = d.at("averages").at(s);
        md << "| " << s << " | " << md_num(a.at("slsim")) << " | " << md_num(a.at("wesim")) << " | "
           << md_num(a.at("pca_l2")) << " |\n";
      }
    }
    if (schema == "ctxprobe.probe/1") {
      md << "Probe: " << d.at("kind").get<std::string>() << ", split seed " << d.at("split_seed").dump() << ", "
         << d.at("num_classes").dump() << " classes (" << d.at("classes_in_train").dump() << " in train), train "
         << d.at("train_size").dump() << " / test " << d.at("test_size").dump() << ".\n\n";
      md << "| Layer | SA | Acts | Out |\n|---|---|---|---|\n";
      const json& acc = d.at("accuracy");
      for (std::size_t l = 0; l < acc.size(); ++l) {
        md << "| " << l + 1 << " | " << md_num(acc[l][0]) << " | " << md_num(acc[l][1]) << " | " << md_num(acc[l][2])
           << " |\n";
      }
    }
    if (schema == "ctxprobe.stats/1") {
      md << "Total samples: " << d.at("stats").at("total_samples").dump()
         << ", unique keywords: " << d.at("stats").at("unique_keywords").dump() << ".\n";
    }
    if (d.contains("warnings") && !d.at("warnings").empty()) {
      md << "\nWarnings:\n\n";
      for (const auto& w : d.at("warnings")) md << "- " << w.get<std::string>() << "\n";
    }
  }
  md << "\n## Provenance\n\n| Artifact | Command | Version | Timestamp | Inputs |\n|---|---|---|---|---|\n";
  for (const auto& art : report.at("artifacts")) {
    const json& m = art.at("provenance");
    md << "| `" << art.at("path").get<std::string>() << "` | " << m.value("command", "") << " | "
       << m.value("version", "") << " | " << m.value("timestamp", "") << " | ";
    bool first = true;
    for (const auto& in : m.value("inputs", json::array())) {
      md << (first ? "" : "<br>") << in.value("role", "") << " " << in.value("sha256", "").substr(0, 12);
      first = false;
    }
    md << " |\n";
  }
  return md.str();
}

}  // namespace ctxprobe
