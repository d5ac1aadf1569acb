#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctxprobe {

enum class DatasetSource { kCPWS, kPWC, kSPWC };

std::string_view to_string(DatasetSource s);
DatasetSource parse_dataset_source(std::string_view s);

// One keyword occurrence annotated with a sense. This is the normalized
// JSON-lines schema every dataset converges to:
//   {"keyword", "sense_label", "sentence", "keyword_occurrence", "source", "topic"}
struct SenseSample {
  std::string keyword;
  std::string sense_label;
  std::string sentence;
  std::size_t keyword_occurrence = 0;
  DatasetSource source = DatasetSource::kCPWS;
  std::optional<std::string> topic;

  nlohmann::json to_json() const;
  static SenseSample from_json(const nlohmann::json& j);
  bool operator==(const SenseSample&) const = default;
};

// Two samples (indices into the owning sample list) sharing a keyword with
// different senses.
struct SentencePair {
  std::string keyword;
  std::size_t a = 0;
  std::size_t b = 0;
  bool operator==(const SentencePair&) const = default;
};

struct DatasetStats {
  std::size_t total_samples = 0;
  std::size_t unique_keywords = 0;
  std::map<std::size_t, std::size_t> senses_per_keyword;  // #senses -> #keywords
  std::map<std::size_t, std::size_t> samples_per_sense;   // #samples -> #(keyword, sense)

  nlohmann::json to_json() const;
};

// "keyword::sense", the global label of a sample.
std::string namespaced_label(const SenseSample& s);

// Sorts by keyword, then sentence (stable for equal keys).
void sort_samples(std::vector<SenseSample>& samples);

// Throws ValidationError if the keyword does not occur `keyword_occurrence`+1
// times in the sentence or the sense label is empty.
void validate_sample(const SenseSample& s);

// One pair per keyword, built from the first two samples (in list order)
// that carry distinct senses. Keywords with a single sense yield no pair.
std::vector<SentencePair> make_pairs(std::span<const SenseSample> samples);

struct CpwsDataset {
  std::vector<SenseSample> samples;
  std::vector<SentencePair> pairs;
  std::vector<std::string> warnings;
};

// CSV with header `keyword,sense,sentence` (RFC 4180 quoting).
CpwsDataset load_cpws(const std::filesystem::path& path);

struct JoinReport {
  std::size_t cwi_rows = 0;
  std::size_t secoda_rows = 0;
  std::size_t matched_rows = 0;
  std::size_t unmatched_rows = 0;        // CWI rows without a SeCoDa annotation
  std::size_t single_sense_rows = 0;     // matched, but the token has < 2 senses
  std::size_t keyword_missing_rows = 0;  // target not found in its own sentence
  std::size_t conflicting_annotations = 0;
  std::size_t kept_rows = 0;
  std::size_t kept_keywords = 0;

  nlohmann::json to_json() const;
};

struct PwcBuild {
  std::vector<SenseSample> samples;
  JoinReport report;
};

// Column names recognised in the SeCoDa header (case-insensitive).
struct SecodaColumns {
  std::vector<std::string> sentence = {"sentence", "context"};
  std::vector<std::string> target = {"target", "target_word", "word", "token"};
  std::vector<std::string> sense = {"sense", "sense_label", "sense_id"};
  std::vector<std::string> topic = {"topic", "domain", "genre"};
};

// Joins CWI rows (tab-separated, no header: id, sentence, start, end, target,
// ...) with SeCoDa sense annotations on (normalized target, normalized
// sentence), keeping tokens that have at least two distinct senses.
PwcBuild build_pwc(std::span<const std::filesystem::path> cwi_paths,
                   const std::filesystem::path& secoda_path, const SecodaColumns& columns = {});

// Exactly one sample per (keyword, sense), chosen from `seed`; keywords with
// fewer than two senses are dropped.
std::vector<SenseSample> subset_spwc(std::span<const SenseSample> pwc, std::uint64_t seed);

DatasetStats stats(std::span<const SenseSample> samples);

std::vector<SenseSample> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(std::span<const SenseSample> samples);
void write_jsonl(const std::filesystem::path& path, std::span<const SenseSample> samples);

// JSON-lines or CPWS CSV, chosen by extension (.csv is CPWS).
std::vector<SenseSample> load_dataset(const std::filesystem::path& path);

// Minimal RFC 4180 reader: quoted fields, doubled quotes, embedded newlines.
std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter,
                                                      const std::string& origin = "<input>");

}  // namespace ctxprobe
