#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ctxprobe/encoder.hpp"
#include "ctxprobe/metrics.hpp"
#include "ctxprobe/probes.hpp"
#include "ctxprobe/trace_store.hpp"

namespace ctxprobe {

std::string_view tool_version();

struct InputRecord {
  std::string role;
  std::string path;
  std::string sha256;
};

// Everything needed to reproduce an artifact.
struct RunManifest {
  std::string tool = "ctxprobe";
  std::string version;
  std::string command;
  nlohmann::json flags = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<InputRecord> inputs;
  std::string timestamp;  // ISO 8601, UTC

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// SOURCE_DATE_EPOCH when set, otherwise the current time.
std::string current_timestamp();

enum class OutputFormat { kCsv, kJson };
std::string_view to_string(OutputFormat f);
OutputFormat parse_output_format(std::string_view s);

// Flags of every command; the subset a command uses is documented in the CLI.
struct CommandOptions {
  std::string command;
  std::string model_dir;
  std::string dataset;
  std::string dataset_id;  // defaults to the dataset file stem
  std::string store;
  std::vector<std::string> inputs;  // report: artifacts; build-pwc: CWI files
  std::string secoda;
  std::string out;
  std::string markdown;  // report: markdown path (default: out with .md)
  CapturePolicy policy;
  std::uint64_t seed = 0;
  OutputFormat format = OutputFormat::kCsv;
  unsigned threads = 1;
  ProbeKind probe_kind = ProbeKind::kLR;
  ProbeParams probe;
  std::size_t max_len = 128;
  bool skip_incomplete_pairs = false;

  nlohmann::json to_json() const;
  static CommandOptions from_json(const nlohmann::json& j);
};

struct CommandResult {
  std::vector<std::filesystem::path> outputs;
  std::vector<std::string> warnings;
  std::string summary;
};

// Runs one command. Without `replay` a fresh manifest is recorded; with it
// the recorded manifest is reused verbatim after checking every input
// checksum (ProvenanceError on mismatch), so outputs are byte-identical.
CommandResult run_command(const CommandOptions& options, const std::optional<RunManifest>& replay = std::nullopt);

// Extracts the manifest embedded in any artifact: trace store, JSON or CSV
// output, markdown report, or a sidecar manifest file.
RunManifest read_manifest(const std::filesystem::path& artifact);

// Re-executes the run recorded in `artifact`, writing to `out_override`
// when given instead of the recorded output path.
CommandResult rerun(const std::filesystem::path& artifact, const std::string& out_override = {},
                    const std::string& markdown_override = {});

// Library forms of the analysis commands.
struct PairSelection {
  std::vector<TraceSet> traces;     // records of the store, in record order
  std::vector<SentencePair> pairs;  // indices into `traces`
  std::vector<std::string> warnings;
};
PairSelection select_pairs(const TraceStore& store, bool skip_incomplete);

nlohmann::json similarity_json(const CurveSet& curves);
std::string similarity_csv_rows(const CurveSet& curves);
nlohmann::json summary_json(const ContextualizationSummary& s);
std::string summary_csv_rows(const ContextualizationSummary& s);
std::string probe_csv_rows(const ProbeGridResult& r);

// Markdown and combined JSON for already-loaded JSON artifacts. Throws
// ProvenanceError on conflicting manifests.
struct ReportInput {
  std::string path;
  std::string sha256;
  nlohmann::json artifact;
};
nlohmann::json combine_report(const std::vector<ReportInput>& inputs);
std::string render_markdown(const nlohmann::json& report);

}  // namespace ctxprobe
